// estimator.hpp: Perturbative extraction of (nu_tls, g) from a spectroscopy map:
// contrast profile, label-guided peak picking, damped-cosine fit of the TLS column and
// the closed-form g = Omega * |Delta~| / A, nu_tls = nu~_tls - g^2 / Delta~.

#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlsspec/spectroscopy.hpp"

namespace tlsspec::estimator {

// Per-column max(P) - mean(P) over t_A. Requires at least two time rows.
std::vector<double> contrast_profile(const spectro::SpectroscopyMap& map);

class PeakError : public std::runtime_error {
public:
    enum class Kind { kPeaksCollide, kEmptyWindow };
    PeakError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct PeakPick {
    double nu_q_obs = 0.0;
    double nu_tls_obs = 0.0;
    int q_index = -1;
    int tls_index = -1;
    // Pick sits on the first or last grid point of its window (not an interior maximum).
    bool q_on_edge = false;
    bool tls_on_edge = false;
};

// argmax of the profile within +-window of each hint. Ties resolve to the lower index.
PeakPick pick_peaks(std::span<const double> profile, std::span<const double> omega_axis,
                    double nu_q_hint, double nu_tls_hint, double window);

class FitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// p(t) = c1 + c2 exp(-c3 t) cos(c4 t + c5)
struct FitResult {
    std::array<double, 5> c{};
    double residual_rms = 0.0;
    bool converged = false;
    int iterations = 0;

    double offset() const { return c[0]; }
    double amplitude() const { return c[1]; }
    double decay_rate() const { return c[2]; }       // 1/ns
    double angular_frequency() const { return c[3]; }  // rad/ns
    double phase() const { return c[4]; }            // rad, in [0, 2*pi)
};

double damped_cosine(const std::array<double, 5>& c, double t);

struct FitOptions {
    int max_iterations = 200;
    double cost_tolerance = 1e-10;      // relative decrease of the cost
    double gradient_tolerance = 1e-12;  // max-norm of J^T r
};

// Levenberg–Marquardt fit. Start: c1 = mean, c2 = (max - min)/2, c3 = 1/t_max, c4 from
// the dominant non-zero DFT bin, c5 = 0. The result is folded to c2, c3, c4 >= 0 and
// c5 in [0, 2*pi). Hitting max_iterations returns converged = false; a non-finite or
// singular normal system throws FitError. Requires >= 10 strictly increasing times.
FitResult fit_damped_cosine(std::span<const double> times, std::span<const double> values,
                            const FitOptions& options = {});

// True iff nu_tls lies in [nu_q - half_width, nu_q + half_width].
bool validity_filter(double nu_tls, double nu_q, double half_width = 0.2);

enum class RejectReason {
    kNone,
    kOutOfRange,
    kPeaksCollide,
    kEmptyWindow,
    kEdgePeak,
    kTwoPhotonOverlap,
    kSingularJacobian,
    kNotConverged,
    kLowAmplitude,
    kUnderResolved,
    kImplausibleCoupling,
};

std::string to_string(RejectReason reason);
RejectReason parse_reject_reason(const std::string& text);

struct EstimateHints {
    double nu_q = 7.0;       // label qubit frequency, GHz
    double nu_tls = 7.1;     // label TLS frequency, GHz
    double amplitude = 0.02; // drive amplitude A, GHz
    double anharmonicity = std::numeric_limits<double>::quiet_NaN();  // U, GHz; NaN skips the |20> guard
};

struct EstimatorOptions {
    double window = 0.05;               // peak search half-width, GHz
    double validity_half_width = 0.2;   // GHz around nu_q
    double min_amplitude = 1e-3;        // fitted |c2| below this is no oscillation
    // Automatic stand-ins for manual curation; set to 0 / false to disable.
    bool reject_edge_peaks = true;
    double two_photon_guard = 0.02;     // GHz around nu~_q - U/2
    double min_periods = 1.0;           // fitted oscillation periods across the t_A window
    double max_coupling = 0.1;          // GHz; twice the top of the sampled g range
    // nu_tls = nu~_tls - g^2 / Delta~ inverts the dispersive shift of the 2x2 problem.
    // Setting this adds the shift instead, which biases nu_tls by 2 g^2 / Delta~.
    bool add_dispersive_shift = false;
    FitOptions fit;
};

struct EstimateResult {
    double nu_tls_hat = std::numeric_limits<double>::quiet_NaN();
    double g_hat = std::numeric_limits<double>::quiet_NaN();
    double nu_q_dressed_obs = std::numeric_limits<double>::quiet_NaN();
    double nu_tls_dressed_obs = std::numeric_limits<double>::quiet_NaN();
    double detuning_dressed_obs = std::numeric_limits<double>::quiet_NaN();
    FitResult fit;
    bool valid = false;
    RejectReason reject_reason = RejectReason::kNone;
};

EstimateResult estimate(const spectro::SpectroscopyMap& map, const EstimateHints& hints,
                        const EstimatorOptions& options = {});

}  // namespace tlsspec::estimator
