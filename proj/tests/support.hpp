// support.hpp: Shared helpers for the unit and acceptance tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#ifndef TLSSPEC_ORACLE_DIR
#error "TLSSPEC_ORACLE_DIR must point at tests/oracles"
#endif

namespace tlsspec::testing {

inline nlohmann::json load_oracle(const std::string& name) {
    std::ifstream in(std::filesystem::path(TLSSPEC_ORACLE_DIR) / name);
    if (!in) throw std::runtime_error("missing oracle file " + name);
    return nlohmann::json::parse(in);
}

// Kolmogorov–Smirnov distance between the sample and U[lo, hi].
inline double ks_uniform(std::vector<double> x, double lo, double hi) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = std::clamp((x[i] - lo) / (hi - lo), 0.0, 1.0);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Smallest distance between two angles.
inline double angle_distance(double a, double b) {
    const double d = std::fmod(std::abs(a - b), 2.0 * M_PI);
    return std::min(d, 2.0 * M_PI - d);
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("tlsspec_test_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace tlsspec::testing
