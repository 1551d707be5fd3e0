// quantum.hpp: Truncated transmon (n <= 2) x TLS model: operators, rotating-frame
// Hamiltonian, Lindblad right-hand side, time evolution and dressed frequencies.
//
// Units: every frequency crossing this interface is an ordinary frequency in GHz,
// every time is in ns. The 2*pi conversion to rad/ns happens inside the builders.

#pragma once

#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tlsspec::quantum {

inline constexpr int kQubitLevels = 3;
inline constexpr int kTlsLevels = 2;
inline constexpr int kDim = kQubitLevels * kTlsLevels;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Complex = std::complex<double>;
using Matrix6c = Eigen::Matrix<Complex, kDim, kDim>;

// Basis |n_q n_tls> is stored at index 2*n_q + n_tls.
constexpr int basis_index(int n_qubit, int n_tls) { return kTlsLevels * n_qubit + n_tls; }

struct SystemParams {
    double nu_q = 7.0;    // qubit frequency, GHz
    double nu_tls = 7.1;  // TLS frequency, GHz
    double U = 0.2;       // anharmonicity, GHz
    double g = 0.02;      // qubit-TLS coupling, GHz
    // Relaxation and pure-dephasing times, ns. An infinite time switches the channel off.
    double T1_q = 5000.0;
    double Tphi_q = 2000.0;
    double T1_tls = 5000.0;
    double Tphi_tls = 5000.0;
    double A = 0.02;  // drive amplitude, GHz

    double gamma_q() const { return 1.0 / T1_q; }
    double kappa_q() const { return 1.0 / Tphi_q; }
    double gamma_tls() const { return 1.0 / T1_tls; }
    double kappa_tls() const { return 1.0 / Tphi_tls; }
    double detuning() const { return nu_tls - nu_q; }
};

// Throws std::invalid_argument on non-positive frequencies, negative coupling or
// amplitude, and non-positive or NaN decoherence times.
void validate(const SystemParams& params);

struct Operators {
    Matrix6c a;      // qubit lowering, sqrt(n) ladder truncated at n = 2
    Matrix6c a_dag;
    Matrix6c b;      // TLS lowering
    Matrix6c b_dag;
};

Operators build_operators();
// Cached instance of build_operators().
const Operators& operators();

// H_rot = (w_q - w_d) a'a - (U/2) a'a'aa + (w_tls - w_d) b'b + g (a'b + b'a) + (A/2)(a + a'),
// every coefficient multiplied by 2*pi so the result is in rad/ns.
Matrix6c build_hamiltonian(const SystemParams& params, double nu_drive);

// d(rho)/dt: -i[H, rho] plus relaxation (a, b) and number-operator dephasing
// (a'a, b'b) channels with rates 1/T1 and 1/Tphi.
Matrix6c lindblad_rhs(const Matrix6c& rho, const Matrix6c& H, const SystemParams& params);

// 36x36 superoperator acting on the row-major vectorization rho(i, j) -> v[6*i + j].
Eigen::MatrixXcd build_liouvillian(const Matrix6c& H, const SystemParams& params);

struct InvariantReport {
    double trace_error = 0.0;        // |Tr rho - 1|
    double hermiticity_error = 0.0;  // max |rho - rho^dagger|
    double min_eigenvalue = 0.0;
};

class DensityMatrix {
public:
    DensityMatrix() : rho_(Matrix6c::Zero()) { rho_(0, 0) = 1.0; }
    explicit DensityMatrix(const Matrix6c& rho) : rho_(rho) {}

    static DensityMatrix basis_state(int n_qubit, int n_tls);

    const Matrix6c& matrix() const { return rho_; }
    Complex operator()(int i, int j) const { return rho_(i, j); }

    // <a'a> and <b'b>
    double qubit_population() const;
    double tls_population() const;

    InvariantReport invariants() const;
    // Same tolerances as check_density_matrix; a Cholesky attempt stands in for the
    // eigenvalue bound unless it fails.
    bool within_tolerances() const;

private:
    Matrix6c rho_;
};

inline constexpr double kTraceTolerance = 1e-8;
inline constexpr double kHermiticityTolerance = 1e-10;
inline constexpr double kPositivityTolerance = 1e-8;

class IntegrationError : public std::runtime_error {
public:
    enum class Kind { kStepUnderflow, kInvariantViolation };
    IntegrationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

enum class Integrator {
    kDormandPrince,  // adaptive embedded RK5(4)
    kPropagator,     // exact exponential of the time-independent Liouvillian
};

struct EvolveOptions {
    Integrator method = Integrator::kDormandPrince;
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    bool check_invariants = true;

    static EvolveOptions test_precision() { return {Integrator::kDormandPrince, 1e-8, 1e-10, true}; }
    static EvolveOptions bulk_rk() { return {Integrator::kDormandPrince, 1e-6, 1e-8, true}; }
    static EvolveOptions bulk() { return {Integrator::kPropagator, 1e-6, 1e-8, true}; }
};

// Evolves rho0 under the time-independent (H, params) generator and returns rho(t)
// at each snapshot time. Snapshots must be non-negative and ascending.
std::vector<DensityMatrix> evolve(const DensityMatrix& rho0, const Matrix6c& H,
                                  const SystemParams& params, std::span<const double> snapshots,
                                  const EvolveOptions& options = {});

// Throws IntegrationError(kInvariantViolation) when rho breaches the density-matrix
// tolerances above. `context` is prepended to the message.
void check_density_matrix(const DensityMatrix& rho, const std::string& context);

// Fixed-duration propagator exp(L t) for repeated application, e.g. the readout pulse.
class Propagator {
public:
    Propagator(const Matrix6c& H, const SystemParams& params, double duration);
    DensityMatrix apply(const DensityMatrix& rho) const;
    double duration() const { return duration_; }

private:
    Eigen::MatrixXcd map_;
    double duration_;
};

struct DressedFrequencies {
    double nu_q_dressed = 0.0;
    double nu_tls_dressed = 0.0;
    double detuning_dressed = 0.0;
};

// Single-excitation eigenfrequencies of [[nu_q, g], [g, nu_tls]]. The eigenvalue with
// the larger |10> overlap is the dressed qubit; at exact resonance the lower one is.
DressedFrequencies dressed_frequencies(const SystemParams& params);

}  // namespace tlsspec::quantum
