// spectroscopy.hpp: Two-tone protocol (drive pulse A at nu_d for t_A, readout pi-pulse B
// at the dressed qubit frequency) producing P(nu_d, t_A) maps, plus measurement noise.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tlsspec/quantum.hpp"

namespace tlsspec::spectro {

// Uniform grid lo..hi with n points, endpoints included.
struct UniformGrid {
    double lo = 0.0;
    double hi = 1.0;
    int n = 2;

    double step() const { return (hi - lo) / (n - 1); }
    double at(int i) const { return i == n - 1 ? hi : lo + i * step(); }
    std::vector<double> points() const;
    void validate(std::string_view name) const;

    // "lo:hi:n"
    static UniformGrid parse(std::string_view text);
    std::string to_string() const;

    bool operator==(const UniformGrid&) const = default;
};

// Readout pi-pulse length in ns for drive amplitude A in GHz: 1 / (2A).
double pi_pulse_duration(double amplitude);

struct ProtocolConfig {
    UniformGrid omega{6.6, 7.4, 100};  // nu_d, GHz
    UniformGrid time{0.0, 500.0, 100};  // t_A, ns
    double amplitude = 0.02;            // A, GHz; overrides SystemParams::A
    quantum::EvolveOptions evolve = quantum::EvolveOptions::bulk();
    int threads = 1;  // concurrent omega columns

    double t_pi() const { return pi_pulse_duration(amplitude); }
    void validate() const;
};

using MapMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SpectroscopyMap {
    std::vector<double> omega_axis;  // columns, GHz
    std::vector<double> time_axis;   // rows, ns
    MapMatrix P;                     // P(t_A, nu_d) = <a'a> after pulse B

    int rows() const { return static_cast<int>(P.rows()); }
    int cols() const { return static_cast<int>(P.cols()); }
    std::vector<double> column(int j) const;
    // Throws std::invalid_argument when axis lengths disagree with P.
    void validate_shape() const;
};

// Runs the protocol for every nu_d column. Pulse A is integrated once per column with
// snapshots at every t_A; each snapshot is then read out by pulse B of length t_pi.
// Integration failures are rethrown as IntegrationError naming the offending column.
SpectroscopyMap run_protocol(const quantum::SystemParams& params, const ProtocolConfig& config);

// Adds independent uniform noise on [-width/2, width/2] to every pixel. The result is
// not clamped. Deterministic in `seed`. Requires 0 <= width <= 0.5.
SpectroscopyMap add_noise(const SpectroscopyMap& map, double width, std::uint64_t seed);

}  // namespace tlsspec::spectro
