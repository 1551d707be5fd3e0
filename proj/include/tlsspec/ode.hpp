// ode.hpp: Explicit Runge–Kutta integrators over Eigen matrix states.
//
// The right-hand side is any callable `State rhs(double t, const State& y)`, so the
// same steppers serve the time-independent rotating-frame generator and the
// explicitly time-dependent lab-frame check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include <fmt/format.h>

#include "tlsspec/quantum.hpp"

namespace tlsspec::ode {

struct StepStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_calls = 0;
};

namespace detail {

// Hairer–Wanner scaled RMS norm of an error estimate.
template <class State>
double scaled_rms(const State& err, const State& y0, const State& y1, double rtol, double atol) {
    const auto scale = (atol + rtol * y0.cwiseAbs().cwiseMax(y1.cwiseAbs()).array()).eval();
    const double sum = (err.cwiseAbs().array() / scale).square().sum();
    return std::sqrt(sum / static_cast<double>(err.size()));
}

}  // namespace detail

// Adaptive Dormand–Prince RK5(4) with FSAL and exact landing on every snapshot time.
// `observe(i, y)` is called with the state at times[i]. Throws
// quantum::IntegrationError(kStepUnderflow) when the step size collapses.
template <class State, class Rhs, class Observer>
StepStats integrate_adaptive(Rhs&& rhs, State y, double t0, std::span<const double> times,
                             double rtol, double atol, Observer&& observe) {
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                     a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                     a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                     b6 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                     e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    StepStats stats;
    double t = t0;
    State k1 = rhs(t, y);
    ++stats.rhs_calls;

    double h = 0.0;
    {
        const double d0 = detail::scaled_rms(y, y, y, rtol, atol);
        const double d1 = detail::scaled_rms(k1, y, y, rtol, atol);
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    }

    for (std::size_t i = 0; i < times.size(); ++i) {
        const double target = times[i];
        while (t < target) {
            const double remaining = target - t;
            const bool last = h >= remaining;
            const double step = last ? remaining : h;
            if (step < 1e-12 * std::max(1.0, std::abs(t))) {
                throw quantum::IntegrationError(
                    quantum::IntegrationError::Kind::kStepUnderflow,
                    fmt::format("step size underflow (h = {:.3g} ns) at t = {:.6g} ns", step, t));
            }
            const State k2 = rhs(t + c2 * step, (y + step * (a21 * k1)).eval());
            const State k3 = rhs(t + c3 * step, (y + step * (a31 * k1 + a32 * k2)).eval());
            const State k4 =
                rhs(t + c4 * step, (y + step * (a41 * k1 + a42 * k2 + a43 * k3)).eval());
            const State k5 = rhs(
                t + c5 * step, (y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4)).eval());
            const State k6 =
                rhs(t + step,
                    (y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5)).eval());
            const State y_new = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            const double t_new = last ? target : t + step;
            const State k7 = rhs(t_new, y_new);
            stats.rhs_calls += 6;

            const State err =
                step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            const double err_norm = detail::scaled_rms(err, y, y_new, rtol, atol);

            if (err_norm <= 1.0) {
                t = t_new;
                y = y_new;
                k1 = k7;
                ++stats.accepted;
                const double factor =
                    err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
                // A step clipped to land on a snapshot keeps the proposed size for the next one.
                if (!last) h *= factor;
            } else {
                ++stats.rejected;
                h = step * std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
            }
        }
        observe(i, y);
    }
    return stats;
}

// Classic fixed-step RK4 from t0 to t1 in `steps` equal steps.
template <class State, class Rhs>
State integrate_rk4(Rhs&& rhs, State y, double t0, double t1, int steps) {
    const double h = (t1 - t0) / steps;
    double t = t0;
    for (int s = 0; s < steps; ++s) {
        const State k1 = rhs(t, y);
        const State k2 = rhs(t + 0.5 * h, (y + 0.5 * h * k1).eval());
        const State k3 = rhs(t + 0.5 * h, (y + 0.5 * h * k2).eval());
        const State k4 = rhs(t + h, (y + h * k3).eval());
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + (s + 1) * h;
    }
    return y;
}

}  // namespace tlsspec::ode
