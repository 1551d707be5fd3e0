#include "tlsspec/quantum.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "tlsspec/ode.hpp"

namespace tlsspec::quantum {

namespace {

using Liouvillian = Eigen::MatrixXcd;

// Lindblad channels of the model: collapse operator and its rate (1/ns).
struct Channel {
    Matrix6c op;
    double rate;
};

std::vector<Channel> channels(const SystemParams& p) {
    const Operators& ops = operators();
    std::vector<Channel> out;
    const auto add = [&](const Matrix6c& op, double rate) {
        if (rate > 0.0) out.push_back({op, rate});
    };
    add(ops.a, p.gamma_q());
    add(ops.a_dag * ops.a, p.kappa_q());
    add(ops.b, p.gamma_tls());
    add(ops.b_dag * ops.b, p.kappa_tls());
    return out;
}

// H - (i/2) sum_k rate_k L_k' L_k
Matrix6c effective_hamiltonian(const Matrix6c& H, const std::vector<Channel>& chans) {
    Matrix6c h_eff = H;
    for (const auto& c : chans) {
        h_eff -= Complex(0.0, 0.5 * c.rate) * (c.op.adjoint() * c.op);
    }
    return h_eff;
}

}  // namespace

void validate(const SystemParams& p) {
    const auto positive_time = [](double t) { return t > 0.0 && !std::isnan(t); };
    if (!(p.nu_q > 0.0) || !(p.nu_tls > 0.0)) {
        throw std::invalid_argument("qubit and TLS frequencies must be positive");
    }
    if (!(p.U >= 0.0) || !(p.g >= 0.0) || !(p.A >= 0.0)) {
        throw std::invalid_argument("anharmonicity, coupling and drive amplitude must be >= 0");
    }
    if (!positive_time(p.T1_q) || !positive_time(p.Tphi_q) || !positive_time(p.T1_tls) ||
        !positive_time(p.Tphi_tls)) {
        throw std::invalid_argument("decoherence times must be positive");
    }
}

Operators build_operators() {
    Operators ops;
    ops.a.setZero();
    ops.b.setZero();
    for (int nq = 0; nq < kQubitLevels; ++nq) {
        for (int nt = 0; nt < kTlsLevels; ++nt) {
            if (nq > 0) ops.a(basis_index(nq - 1, nt), basis_index(nq, nt)) = std::sqrt(double(nq));
            if (nt > 0) ops.b(basis_index(nq, nt - 1), basis_index(nq, nt)) = 1.0;
        }
    }
    ops.a_dag = ops.a.adjoint();
    ops.b_dag = ops.b.adjoint();
    return ops;
}

const Operators& operators() {
    static const Operators ops = build_operators();
    return ops;
}

Matrix6c build_hamiltonian(const SystemParams& p, double nu_drive) {
    const Operators& o = operators();
    const Matrix6c n_q = o.a_dag * o.a;
    const Matrix6c n_tls = o.b_dag * o.b;
    Matrix6c h = (p.nu_q - nu_drive) * n_q - 0.5 * p.U * (o.a_dag * o.a_dag * o.a * o.a) +
                 (p.nu_tls - nu_drive) * n_tls + p.g * (o.a_dag * o.b + o.b_dag * o.a) +
                 0.5 * p.A * (o.a + o.a_dag);
    return kTwoPi * h;
}

Matrix6c lindblad_rhs(const Matrix6c& rho, const Matrix6c& H, const SystemParams& p) {
    const Complex minus_i(0.0, -1.0);
    Matrix6c out = minus_i * (H * rho - rho * H);
    for (const auto& c : channels(p)) {
        const Matrix6c ldl = c.op.adjoint() * c.op;
        out += c.rate * (c.op * rho * c.op.adjoint() - 0.5 * (ldl * rho + rho * ldl));
    }
    return out;
}

Liouvillian build_liouvillian(const Matrix6c& H, const SystemParams& p) {
    // Row-major vectorization: vec(X rho Y) = kron(X, Y^T) vec(rho).
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(kDim, kDim);
    const Eigen::MatrixXcd h = H;
    const Complex minus_i(0.0, -1.0);
    Liouvillian L = minus_i * (Eigen::kroneckerProduct(h, id) -
                               Eigen::kroneckerProduct(id, h.transpose()).eval());
    for (const auto& c : channels(p)) {
        const Eigen::MatrixXcd op = c.op;
        const Eigen::MatrixXcd ldl = c.op.adjoint() * c.op;
        L += c.rate * (Eigen::kroneckerProduct(op, op.conjugate()).eval() -
                       0.5 * Eigen::kroneckerProduct(ldl, id).eval() -
                       0.5 * Eigen::kroneckerProduct(id, ldl.transpose()).eval());
    }
    return L;
}

DensityMatrix DensityMatrix::basis_state(int n_qubit, int n_tls) {
    if (n_qubit < 0 || n_qubit >= kQubitLevels || n_tls < 0 || n_tls >= kTlsLevels) {
        throw std::out_of_range("basis state outside the truncated space");
    }
    Matrix6c rho = Matrix6c::Zero();
    const int k = basis_index(n_qubit, n_tls);
    rho(k, k) = 1.0;
    return DensityMatrix(rho);
}

double DensityMatrix::qubit_population() const {
    const Operators& o = operators();
    return (rho_ * o.a_dag * o.a).trace().real();
}

double DensityMatrix::tls_population() const {
    const Operators& o = operators();
    return (rho_ * o.b_dag * o.b).trace().real();
}

InvariantReport DensityMatrix::invariants() const {
    InvariantReport r;
    r.trace_error = std::abs(rho_.trace() - Complex(1.0, 0.0));
    r.hermiticity_error = (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
    const Matrix6c herm = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix6c> solver(herm, Eigen::EigenvaluesOnly);
    r.min_eigenvalue = solver.eigenvalues().minCoeff();
    return r;
}

bool DensityMatrix::within_tolerances() const {
    if (!(std::abs(rho_.trace() - Complex(1.0, 0.0)) <= kTraceTolerance)) return false;
    if (!((rho_ - rho_.adjoint()).cwiseAbs2().maxCoeff() <= kHermiticityTolerance * kHermiticityTolerance)) {
        return false;
    }
    // rho + tol*I positive definite implies min eigenvalue > -tol.
    Matrix6c shifted = 0.5 * (rho_ + rho_.adjoint());
    shifted.diagonal().array() += kPositivityTolerance;
    if (Eigen::LLT<Matrix6c>(shifted).info() == Eigen::Success) return true;
    return invariants().min_eigenvalue >= -kPositivityTolerance;
}

void check_density_matrix(const DensityMatrix& rho, const std::string& context) {
    if (rho.within_tolerances()) return;
    const InvariantReport r = rho.invariants();
    if (!(r.trace_error <= kTraceTolerance) || !(r.hermiticity_error <= kHermiticityTolerance) ||
        !(r.min_eigenvalue >= -kPositivityTolerance)) {
        throw IntegrationError(
            IntegrationError::Kind::kInvariantViolation,
            fmt::format("{}: density matrix invariant violated (|Tr-1| = {:.3g}, "
                        "hermiticity = {:.3g}, min eigenvalue = {:.3g})",
                        context, r.trace_error, r.hermiticity_error, r.min_eigenvalue));
    }
}

namespace {

using Vec36c = Eigen::Matrix<Complex, kDim * kDim, 1>;

Vec36c vectorize(const Matrix6c& rho) {
    Vec36c v;
    for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j) v(kDim * i + j) = rho(i, j);
    return v;
}

Matrix6c unvectorize(const Vec36c& v) {
    Matrix6c rho;
    for (int i = 0; i < kDim; ++i)
        for (int j = 0; j < kDim; ++j) rho(i, j) = v(kDim * i + j);
    return rho;
}

std::vector<DensityMatrix> evolve_runge_kutta(const DensityMatrix& rho0, const Matrix6c& H,
                                              const SystemParams& p,
                                              std::span<const double> snapshots,
                                              const EvolveOptions& options) {
    const auto chans = channels(p);
    const Matrix6c h_eff = effective_hamiltonian(H, chans);
    const Matrix6c h_eff_dag = h_eff.adjoint();
    const Complex minus_i(0.0, -1.0);
    // -i(H_eff rho - rho H_eff') + sum rate L rho L'
    const auto rhs = [&](double, const Matrix6c& rho) -> Matrix6c {
        Matrix6c out = minus_i * (h_eff * rho - rho * h_eff_dag);
        for (const auto& c : chans) out.noalias() += c.rate * (c.op * rho * c.op.adjoint());
        return out;
    };
    std::vector<DensityMatrix> out;
    out.reserve(snapshots.size());
    ode::integrate_adaptive(rhs, rho0.matrix(), 0.0, snapshots, options.rel_tol, options.abs_tol,
                            [&](std::size_t, const Matrix6c& rho) { out.emplace_back(rho); });
    return out;
}

std::vector<DensityMatrix> evolve_propagator(const DensityMatrix& rho0, const Matrix6c& H,
                                             const SystemParams& p,
                                             std::span<const double> snapshots) {
    const Liouvillian L = build_liouvillian(H, p);
    std::vector<DensityMatrix> out;
    out.reserve(snapshots.size());
    Vec36c v = vectorize(rho0.matrix());
    double t = 0.0;
    double cached_gap = -1.0;
    Eigen::MatrixXcd step;
    for (double target : snapshots) {
        const double gap = target - t;
        if (gap > 0.0) {
            // Uniform grids produce gaps equal up to rounding; reuse the exponential.
            if (std::abs(gap - cached_gap) > 1e-12 * std::max(1.0, target)) {
                step = (L * gap).exp();
                cached_gap = gap;
            }
            v = (step * v).eval();
            t = target;
        }
        out.emplace_back(unvectorize(v));
    }
    return out;
}

}  // namespace

std::vector<DensityMatrix> evolve(const DensityMatrix& rho0, const Matrix6c& H,
                                  const SystemParams& params, std::span<const double> snapshots,
                                  const EvolveOptions& options) {
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        if (snapshots[i] < 0.0 || (i > 0 && snapshots[i] < snapshots[i - 1])) {
            throw std::invalid_argument("snapshot times must be non-negative and ascending");
        }
    }
    std::vector<DensityMatrix> out = options.method == Integrator::kPropagator
                                         ? evolve_propagator(rho0, H, params, snapshots)
                                         : evolve_runge_kutta(rho0, H, params, snapshots, options);
    if (options.check_invariants) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (!out[i].within_tolerances()) {
                check_density_matrix(out[i], fmt::format("t = {:.6g} ns", snapshots[i]));
            }
        }
    }
    return out;
}

Propagator::Propagator(const Matrix6c& H, const SystemParams& params, double duration)
    : map_((build_liouvillian(H, params) * duration).exp()), duration_(duration) {}

DensityMatrix Propagator::apply(const DensityMatrix& rho) const {
    return DensityMatrix(unvectorize(Vec36c(map_ * vectorize(rho.matrix()))));
}

DressedFrequencies dressed_frequencies(const SystemParams& p) {
    DressedFrequencies d;
    if (p.g == 0.0) {
        d.nu_q_dressed = p.nu_q;
        d.nu_tls_dressed = p.nu_tls;
    } else {
        const double delta = p.nu_tls - p.nu_q;
        const double mean = 0.5 * (p.nu_q + p.nu_tls);
        const double half_split = std::sqrt(0.25 * delta * delta + p.g * p.g);
        const double lower = mean - half_split;
        const double upper = mean + half_split;
        // The qubit-like eigenvector has the larger |10> weight g^2 / (g^2 + (lambda - nu_q)^2),
        // i.e. the eigenvalue closer to nu_q. Exact resonance is a tie: take the lower one.
        if (delta >= 0.0) {
            d.nu_q_dressed = lower;
            d.nu_tls_dressed = upper;
        } else {
            d.nu_q_dressed = upper;
            d.nu_tls_dressed = lower;
        }
    }
    d.detuning_dressed = d.nu_tls_dressed - d.nu_q_dressed;
    return d;
}

}  // namespace tlsspec::quantum
