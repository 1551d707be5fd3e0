#include "tlsspec/estimator.hpp"

#include <algorithm>
#include <array>
#include <numbers>
#include <numeric>
#include <utility>

#include <fmt/format.h>

namespace tlsspec::estimator {

std::vector<double> contrast_profile(const spectro::SpectroscopyMap& map) {
    map.validate_shape();
    if (map.rows() < 2) throw std::invalid_argument("contrast profile needs at least two time rows");
    std::vector<double> profile(static_cast<std::size_t>(map.cols()));
    for (Eigen::Index j = 0; j < map.P.cols(); ++j) {
        const auto col = map.P.col(j);
        profile[static_cast<std::size_t>(j)] = col.maxCoeff() - col.mean();
    }
    return profile;
}

namespace {

// Window edges are inclusive up to rounding of the grid points.
constexpr double kWindowSlack = 1e-12;

struct WindowPick {
    int index = -1;
    bool on_edge = false;
};

WindowPick argmax_in_window(std::span<const double> profile, std::span<const double> axis,
                            double centre, double window, const char* which) {
    int first = -1;
    int last = -1;
    int best = -1;
    for (std::size_t j = 0; j < axis.size(); ++j) {
        if (std::abs(axis[j] - centre) > window + kWindowSlack) continue;
        const int jj = static_cast<int>(j);
        if (first < 0) first = jj;
        last = jj;
        if (best < 0 || profile[j] > profile[static_cast<std::size_t>(best)]) best = jj;
    }
    if (best < 0) {
        throw PeakError(PeakError::Kind::kEmptyWindow,
                        fmt::format("no grid point within {} GHz of the {} hint {:.6f} GHz", window,
                                    which, centre));
    }
    return {best, first != last && (best == first || best == last)};
}

}  // namespace

PeakPick pick_peaks(std::span<const double> profile, std::span<const double> omega_axis,
                    double nu_q_hint, double nu_tls_hint, double window) {
    if (profile.size() != omega_axis.size()) {
        throw std::invalid_argument(
            fmt::format("profile has {} points, axis {}", profile.size(), omega_axis.size()));
    }
    if (!(window > 0.0)) throw std::invalid_argument("peak window must be positive");

    const WindowPick q = argmax_in_window(profile, omega_axis, nu_q_hint, window, "qubit");
    const WindowPick tls = argmax_in_window(profile, omega_axis, nu_tls_hint, window, "TLS");
    if (q.index == tls.index) {
        throw PeakError(PeakError::Kind::kPeaksCollide,
                        fmt::format("qubit and TLS picks share grid point {:.6f} GHz",
                                    omega_axis[static_cast<std::size_t>(q.index)]));
    }
    PeakPick pick;
    pick.q_index = q.index;
    pick.tls_index = tls.index;
    pick.nu_q_obs = omega_axis[static_cast<std::size_t>(q.index)];
    pick.nu_tls_obs = omega_axis[static_cast<std::size_t>(tls.index)];
    pick.q_on_edge = q.on_edge;
    pick.tls_on_edge = tls.on_edge;
    return pick;
}

bool validity_filter(double nu_tls, double nu_q, double half_width) {
    return nu_tls >= nu_q - half_width - kWindowSlack && nu_tls <= nu_q + half_width + kWindowSlack;
}

namespace {

constexpr std::array<std::pair<RejectReason, const char*>, 11> kReasonNames{{
    {RejectReason::kNone, "none"},
    {RejectReason::kOutOfRange, "out_of_range"},
    {RejectReason::kPeaksCollide, "peaks_collide"},
    {RejectReason::kEmptyWindow, "empty_window"},
    {RejectReason::kEdgePeak, "edge_peak"},
    {RejectReason::kTwoPhotonOverlap, "two_photon_overlap"},
    {RejectReason::kSingularJacobian, "singular_jacobian"},
    {RejectReason::kNotConverged, "not_converged"},
    {RejectReason::kLowAmplitude, "low_amplitude"},
    {RejectReason::kUnderResolved, "under_resolved"},
    {RejectReason::kImplausibleCoupling, "implausible_coupling"},
}};

}  // namespace

std::string to_string(RejectReason reason) {
    for (const auto& [r, name] : kReasonNames) {
        if (r == reason) return name;
    }
    return "unknown";
}

RejectReason parse_reject_reason(const std::string& text) {
    for (const auto& [r, name] : kReasonNames) {
        if (text == name) return r;
    }
    throw std::invalid_argument(fmt::format("unknown reject reason '{}'", text));
}

EstimateResult estimate(const spectro::SpectroscopyMap& map, const EstimateHints& hints,
                        const EstimatorOptions& options) {
    if (!(hints.amplitude > 0.0)) throw std::invalid_argument("estimate: drive amplitude must be positive");
    EstimateResult out;
    auto reject = [&](RejectReason reason) {
        out.valid = false;
        out.reject_reason = reason;
        return out;
    };

    if (!validity_filter(hints.nu_tls, hints.nu_q, options.validity_half_width)) {
        return reject(RejectReason::kOutOfRange);
    }

    const std::vector<double> profile = contrast_profile(map);
    PeakPick pick;
    try {
        pick = pick_peaks(profile, map.omega_axis, hints.nu_q, hints.nu_tls, options.window);
    } catch (const PeakError& e) {
        return reject(e.kind() == PeakError::Kind::kPeaksCollide ? RejectReason::kPeaksCollide
                                                                 : RejectReason::kEmptyWindow);
    }
    out.nu_q_dressed_obs = pick.nu_q_obs;
    out.nu_tls_dressed_obs = pick.nu_tls_obs;
    out.detuning_dressed_obs = pick.nu_tls_obs - pick.nu_q_obs;

    try {
        out.fit = fit_damped_cosine(map.time_axis, map.column(pick.tls_index), options.fit);
    } catch (const FitError&) {
        return reject(RejectReason::kSingularJacobian);
    }

    const double omega = out.fit.angular_frequency() / (2.0 * std::numbers::pi);
    const double delta = out.detuning_dressed_obs;
    out.g_hat = omega * std::abs(delta) / hints.amplitude;
    const double shift = out.g_hat * out.g_hat / delta;
    out.nu_tls_hat = out.nu_tls_dressed_obs + (options.add_dispersive_shift ? shift : -shift);

    if (options.reject_edge_peaks && (pick.q_on_edge || pick.tls_on_edge)) {
        return reject(RejectReason::kEdgePeak);
    }
    if (options.two_photon_guard > 0.0 && std::isfinite(hints.anharmonicity) &&
        std::abs(pick.nu_tls_obs - (pick.nu_q_obs - 0.5 * hints.anharmonicity)) < options.two_photon_guard) {
        return reject(RejectReason::kTwoPhotonOverlap);
    }
    if (!out.fit.converged) return reject(RejectReason::kNotConverged);
    if (out.fit.amplitude() < options.min_amplitude) return reject(RejectReason::kLowAmplitude);
    const double span = map.time_axis.back() - map.time_axis.front();
    if (out.fit.angular_frequency() * span < 2.0 * std::numbers::pi * options.min_periods) {
        return reject(RejectReason::kUnderResolved);
    }
    // A qubit-line wing picked instead of the TLS line oscillates at the generalized
    // Rabi rate, which maps to couplings far outside any physical range.
    if (options.max_coupling > 0.0 && out.g_hat > options.max_coupling) {
        return reject(RejectReason::kImplausibleCoupling);
    }

    out.valid = true;
    out.reject_reason = RejectReason::kNone;
    return out;
}

}  // namespace tlsspec::estimator
