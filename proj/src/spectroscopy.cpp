#include "tlsspec/spectroscopy.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <stdexcept>

#include <fmt/format.h>

#include "tlsspec/parallel.hpp"
#include "tlsspec/random.hpp"

namespace tlsspec::spectro {

using quantum::DensityMatrix;
using quantum::IntegrationError;

std::vector<double> UniformGrid::points() const {
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = at(i);
    return out;
}

void UniformGrid::validate(std::string_view name) const {
    if (n < 2) throw std::invalid_argument(fmt::format("{} grid needs at least 2 points", name));
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument(fmt::format("{} grid must be strictly increasing", name));
    }
}

namespace {

double parse_double(std::string_view s, std::string_view whole) {
    // std::from_chars for double is missing from older libstdc++; strtod on a copy.
    const std::string copy(s);
    char* end = nullptr;
    const double v = std::strtod(copy.c_str(), &end);
    if (copy.empty() || end != copy.c_str() + copy.size()) {
        throw std::invalid_argument(fmt::format("bad grid '{}': expected lo:hi:n", whole));
    }
    return v;
}

}  // namespace

UniformGrid UniformGrid::parse(std::string_view text) {
    const auto first = text.find(':');
    const auto second = first == std::string_view::npos ? first : text.find(':', first + 1);
    if (second == std::string_view::npos) {
        throw std::invalid_argument(fmt::format("bad grid '{}': expected lo:hi:n", text));
    }
    UniformGrid g;
    g.lo = parse_double(text.substr(0, first), text);
    g.hi = parse_double(text.substr(first + 1, second - first - 1), text);
    const auto count = text.substr(second + 1);
    const auto [ptr, ec] = std::from_chars(count.data(), count.data() + count.size(), g.n);
    if (ec != std::errc() || ptr != count.data() + count.size()) {
        throw std::invalid_argument(fmt::format("bad grid '{}': point count must be an integer", text));
    }
    return g;
}

std::string UniformGrid::to_string() const { return fmt::format("{}:{}:{}", lo, hi, n); }

double pi_pulse_duration(double amplitude) {
    if (!(amplitude > 0.0)) throw std::invalid_argument("drive amplitude must be positive");
    // Resonant Rabi angular frequency is 2*pi*A; a pi rotation takes pi / (2*pi*A).
    return 1.0 / (2.0 * amplitude);
}

void ProtocolConfig::validate() const {
    omega.validate("omega");
    time.validate("time");
    if (time.lo < 0.0) throw std::invalid_argument("pulse durations must be non-negative");
    if (!(amplitude > 0.0)) throw std::invalid_argument("drive amplitude must be positive");
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::vector<double> SpectroscopyMap::column(int j) const {
    std::vector<double> out(P.rows());
    for (Eigen::Index i = 0; i < P.rows(); ++i) out[i] = P(i, j);
    return out;
}

void SpectroscopyMap::validate_shape() const {
    if (static_cast<Eigen::Index>(time_axis.size()) != P.rows() ||
        static_cast<Eigen::Index>(omega_axis.size()) != P.cols()) {
        throw std::invalid_argument(fmt::format(
            "map shape {}x{} does not match axes ({} times, {} frequencies)", P.rows(), P.cols(),
            time_axis.size(), omega_axis.size()));
    }
}

SpectroscopyMap run_protocol(const quantum::SystemParams& params, const ProtocolConfig& config) {
    config.validate();
    quantum::SystemParams p = params;
    p.A = config.amplitude;
    quantum::validate(p);

    SpectroscopyMap map;
    map.omega_axis = config.omega.points();
    map.time_axis = config.time.points();
    map.P.resize(config.time.n, config.omega.n);

    const double t_pi = config.t_pi();
    const double nu_readout = quantum::dressed_frequencies(p).nu_q_dressed;
    const quantum::Matrix6c h_readout = quantum::build_hamiltonian(p, nu_readout);
    const bool use_propagator = config.evolve.method == quantum::Integrator::kPropagator;
    std::optional<quantum::Propagator> readout;
    if (use_propagator) readout.emplace(h_readout, p, t_pi);

    const DensityMatrix ground = DensityMatrix::basis_state(0, 0);
    const std::vector<double> readout_time{t_pi};

    parallel_for(map.omega_axis.size(), config.threads, [&](std::size_t j) {
        const double nu_d = map.omega_axis[j];
        std::vector<DensityMatrix> after_a;
        try {
            after_a = quantum::evolve(ground, quantum::build_hamiltonian(p, nu_d), p,
                                      map.time_axis, config.evolve);
        } catch (const IntegrationError& e) {
            throw IntegrationError(e.kind(),
                                   fmt::format("pulse A at nu_d = {:.6f} GHz: {}", nu_d, e.what()));
        }
        for (std::size_t i = 0; i < after_a.size(); ++i) {
            double population = 0.0;
            try {
                if (use_propagator) {
                    const DensityMatrix out = readout->apply(after_a[i]);
                    if (config.evolve.check_invariants) quantum::check_density_matrix(out, "pulse B");
                    population = out.qubit_population();
                } else {
                    population = quantum::evolve(after_a[i], h_readout, p, readout_time, config.evolve)
                                     .back()
                                     .qubit_population();
                }
            } catch (const IntegrationError& e) {
                throw IntegrationError(
                    e.kind(), fmt::format("pulse B after nu_d = {:.6f} GHz, t_A = {:.6g} ns: {}",
                                          nu_d, map.time_axis[i], e.what()));
            }
            map.P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = population;
        }
    });
    return map;
}

SpectroscopyMap add_noise(const SpectroscopyMap& map, double width, std::uint64_t seed) {
    if (!(width >= 0.0 && width <= 0.5)) {
        throw std::invalid_argument(fmt::format("noise width {} outside [0, 0.5]", width));
    }
    SpectroscopyMap out = map;
    if (width == 0.0) return out;
    Rng rng(seed);
    // Row-major pixel order fixes the draw sequence.
    for (Eigen::Index i = 0; i < out.P.rows(); ++i) {
        for (Eigen::Index j = 0; j < out.P.cols(); ++j) {
            out.P(i, j) += width * (rng.uniform01() - 0.5);
        }
    }
    return out;
}

}  // namespace tlsspec::spectro
