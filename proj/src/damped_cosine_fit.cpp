#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "tlsspec/estimator.hpp"

namespace tlsspec::estimator {

namespace {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Problem {
    std::span<const double> t;
    std::span<const double> y;

    double cost(const Vec5& c, Eigen::VectorXd& r) const {
        const std::array<double, 5> a{c[0], c[1], c[2], c[3], c[4]};
        for (std::size_t i = 0; i < t.size(); ++i) r[i] = damped_cosine(a, t[i]) - y[i];
        return 0.5 * r.squaredNorm();
    }

    Eigen::MatrixXd jacobian(const Vec5& c) const {
        Eigen::MatrixXd J(static_cast<Eigen::Index>(t.size()), 5);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double e = std::exp(-c[2] * t[i]);
            const double arg = c[3] * t[i] + c[4];
            const double cs = std::cos(arg);
            const double sn = std::sin(arg);
            J(i, 0) = 1.0;
            J(i, 1) = e * cs;
            J(i, 2) = -t[i] * c[1] * e * cs;
            J(i, 3) = -t[i] * c[1] * e * sn;
            J(i, 4) = -c[1] * e * sn;
        }
        return J;
    }
};

// Angular frequency of the strongest non-zero DFT bin of the mean-removed signal.
double dominant_frequency(std::span<const double> t, std::span<const double> y, double mean) {
    const std::size_t n = y.size();
    const double dt = (t.back() - t.front()) / static_cast<double>(n - 1);
    double best_power = -1.0;
    std::size_t best_k = 1;
    for (std::size_t k = 1; k <= n / 2; ++k) {
        double re = 0.0;
        double im = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double phi = kTwoPi * static_cast<double>(k * i % n) / static_cast<double>(n);
            re += (y[i] - mean) * std::cos(phi);
            im -= (y[i] - mean) * std::sin(phi);
        }
        const double power = re * re + im * im;
        if (power > best_power) {
            best_power = power;
            best_k = k;
        }
    }
    return kTwoPi * static_cast<double>(best_k) / (static_cast<double>(n) * dt);
}

}  // namespace

double damped_cosine(const std::array<double, 5>& c, double t) {
    return c[0] + c[1] * std::exp(-c[2] * t) * std::cos(c[3] * t + c[4]);
}

FitResult fit_damped_cosine(std::span<const double> times, std::span<const double> values,
                            const FitOptions& options) {
    if (times.size() != values.size()) {
        throw std::invalid_argument(fmt::format("fit: {} times but {} values", times.size(), values.size()));
    }
    if (times.size() < 10) throw std::invalid_argument("fit: need at least 10 points");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw std::invalid_argument("fit: times must be strictly increasing");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw FitError("fit: non-finite input value");
    }

    const Problem problem{times, values};
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());

    Vec5 c;
    c << mean, 0.5 * (*hi - *lo), 1.0 / times.back(), dominant_frequency(times, values, mean), 0.0;

    Eigen::VectorXd r(static_cast<Eigen::Index>(times.size()));
    Eigen::VectorXd r_trial(r.size());
    double cost = problem.cost(c, r);
    double lambda = 1e-3;

    FitResult out;
    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        out.iterations = iter;
        const Eigen::MatrixXd J = problem.jacobian(c);
        const Mat5 JtJ = J.transpose() * J;
        Vec5 grad = J.transpose() * r;
        if (!JtJ.allFinite() || !grad.allFinite()) throw FitError("fit: non-finite Jacobian");
        // Decay rate pinned at its bound and pushed further down: hold it there this step.
        const bool c3_active = c[2] <= 0.0 && grad[2] > 0.0;
        if (c3_active) grad[2] = 0.0;
        if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance || cost == 0.0) {
            out.converged = true;
            break;
        }

        // Marquardt scaling with a floor so a vanishing amplitude column stays solvable.
        Vec5 diag = JtJ.diagonal();
        const double floor = 1e-12 * std::max(diag.maxCoeff(), 1e-300);
        diag = diag.cwiseMax(floor);

        bool accepted = false;
        bool stalled = false;
        double decrease = 0.0;
        while (!accepted) {
            Mat5 A = JtJ;
            A.diagonal() += lambda * diag;
            if (c3_active) {
                A.row(2).setZero();
                A.col(2).setZero();
                A(2, 2) = 1.0;
            }
            const Eigen::LDLT<Mat5> ldlt(A);
            if (ldlt.info() != Eigen::Success) throw FitError("fit: singular normal equations");
            const Vec5 step = ldlt.solve(-grad);
            if (!step.allFinite()) throw FitError("fit: singular normal equations");

            Vec5 trial = c + step;
            trial[2] = std::max(trial[2], 0.0);
            const double trial_cost = problem.cost(trial, r_trial);
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                decrease = (cost - trial_cost) / cost;
                c = trial;
                cost = trial_cost;
                std::swap(r, r_trial);
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
            } else {
                lambda *= 4.0;
                // No descent left at any damping: stationary to rounding.
                if (lambda > 1e16) {
                    stalled = true;
                    break;
                }
            }
        }
        if (stalled || decrease < options.cost_tolerance) {
            out.converged = true;
            break;
        }
    }

    if (c[1] < 0.0) {
        c[1] = -c[1];
        c[4] += std::numbers::pi;
    }
    if (c[3] < 0.0) {
        c[3] = -c[3];
        c[4] = -c[4];
    }
    c[4] = std::fmod(c[4], kTwoPi);
    if (c[4] < 0.0) c[4] += kTwoPi;
    if (c[4] >= kTwoPi) c[4] = 0.0;

    for (int k = 0; k < 5; ++k) out.c[k] = c[k];
    out.residual_rms = std::sqrt(2.0 * cost / static_cast<double>(times.size()));
    return out;
}

}  // namespace tlsspec::estimator
