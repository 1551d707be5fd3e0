#include <cmath>

#include <doctest.h>

#include "support.hpp"
#include "tlsspec/estimator.hpp"
#include "tlsspec/quantum.hpp"
#include "tlsspec/random.hpp"

using namespace tlsspec;
using namespace tlsspec::estimator;

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = i == n - 1 ? hi : lo + i * (hi - lo) / (n - 1);
    return v;
}

// Flat map at 0.5 with oscillating columns at the given frequencies.
spectro::SpectroscopyMap synthetic_map(const std::vector<std::pair<double, std::array<double, 5>>>& columns) {
    spectro::SpectroscopyMap map;
    map.omega_axis = linspace(6.8, 7.2, 41);
    map.time_axis = linspace(0.0, 500.0, 100);
    map.P = spectro::MapMatrix::Constant(100, 41, 0.5);
    for (const auto& [f, c] : columns) {
        const int j = static_cast<int>(std::lround((f - 6.8) / 0.01));
        for (int i = 0; i < 100; ++i) map.P(i, j) = damped_cosine(c, map.time_axis[i]);
    }
    return map;
}

spectro::SpectroscopyMap simulate(double nu_tls, double g, int omega_points) {
    quantum::SystemParams p;
    p.nu_tls = nu_tls;
    p.g = g;
    p.U = 0.2;
    spectro::ProtocolConfig cfg;
    cfg.omega.n = omega_points;
    cfg.threads = 2;
    return spectro::run_protocol(p, cfg);
}

EstimateHints hints_for(double nu_tls) { return {7.0, nu_tls, 0.02, 0.2}; }

}  // namespace

TEST_CASE("contrast profile") {
    spectro::SpectroscopyMap map;
    map.time_axis = linspace(0.0, 99.0, 100);
    map.omega_axis = {6.9, 7.0, 7.1};
    map.P = spectro::MapMatrix::Constant(100, 3, 0.3);
    // Column 1 oscillates in [0, 1] over exactly five periods.
    for (int i = 0; i < 100; ++i) map.P(i, 1) = 0.5 + 0.5 * std::cos(2.0 * M_PI * i / 20.0);
    const auto profile = contrast_profile(map);
    REQUIRE(profile.size() == 3);
    CHECK(std::abs(profile[0]) < 1e-15);
    CHECK(std::abs(profile[2]) < 1e-15);
    CHECK(profile[1] == doctest::Approx(0.5).epsilon(1e-12));

    map.time_axis = {0.0};
    map.P.resize(1, 3);
    CHECK_THROWS_AS(contrast_profile(map), std::invalid_argument);
}

TEST_CASE("peak picking") {
    const auto axis = linspace(6.9, 7.2, 31);
    std::vector<double> profile(axis.size(), 0.01);
    profile[9] = 1.0;   // 6.99
    profile[21] = 0.3;  // 7.11

    const auto pick = pick_peaks(profile, axis, 7.0, 7.1, 0.05);
    CHECK(pick.nu_q_obs == doctest::Approx(6.99));
    CHECK(pick.nu_tls_obs == doctest::Approx(7.11));
    CHECK(pick.q_index == 9);
    CHECK(pick.tls_index == 21);
    CHECK_FALSE(pick.q_on_edge);
    CHECK_FALSE(pick.tls_on_edge);

    try {
        pick_peaks(profile, axis, 7.0, 7.0, 0.05);
        FAIL("expected PeakError");
    } catch (const PeakError& e) {
        CHECK(e.kind() == PeakError::Kind::kPeaksCollide);
    }
    try {
        pick_peaks(profile, axis, 7.0, 7.5, 0.05);
        FAIL("expected PeakError");
    } catch (const PeakError& e) {
        CHECK(e.kind() == PeakError::Kind::kEmptyWindow);
    }

    // Monotone profile: the maximum lands on the window boundary.
    std::vector<double> ramp(axis.size());
    for (std::size_t j = 0; j < ramp.size(); ++j) ramp[j] = static_cast<double>(j);
    CHECK(pick_peaks(ramp, axis, 7.0, 7.1, 0.05).tls_on_edge);
}

TEST_CASE("damped-cosine fit against the scipy oracle") {
    const auto oracle = testing::load_oracle("oracles.json").at("fits");
    for (const auto& f : oracle) {
        const auto t = f.at("t").get<std::vector<double>>();
        const auto y = f.at("y").get<std::vector<double>>();
        const auto c = f.at("c").get<std::vector<double>>();
        CAPTURE(f.at("width").get<double>());
        const auto fit = fit_damped_cosine(t, y);
        CHECK(fit.converged);
        for (int k = 0; k < 4; ++k) {
            CAPTURE(k);
            CHECK(std::abs(fit.c[k] - c[k]) <= 1e-6 * std::max(1.0, std::abs(c[k])));
        }
        CHECK(testing::angle_distance(fit.phase(), c[4]) < 1e-5);
        CHECK(fit.residual_rms == doctest::Approx(f.at("rms").get<double>()).epsilon(1e-6));
    }
}

TEST_CASE("noiseless fit recovers the generating parameters") {
    const std::array<double, 5> truth{0.5, 0.4, 0.002, 0.0628, 0.0};
    const auto t = linspace(0.0, 500.0, 100);
    std::vector<double> y(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) y[i] = damped_cosine(truth, t[i]);
    const auto fit = fit_damped_cosine(t, y);
    CHECK(fit.converged);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(fit.c[k] - truth[k]) / truth[k] < 1e-3);
    CHECK(testing::angle_distance(fit.phase(), 0.0) < 1e-3);
    CHECK(fit.c[2] >= 0.0);
    CHECK(fit.c[3] >= 0.0);
    CHECK(fit.phase() >= 0.0);
    CHECK(fit.phase() < 2.0 * M_PI);
}

TEST_CASE("residual rms matches the injected noise") {
    const std::array<double, 5> truth{0.5, 0.3, 0.001, 0.05, 1.0};
    const auto t = linspace(0.0, 500.0, 200);
    for (double width : {0.02, 0.05, 0.1}) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            std::vector<double> y(t.size());
            for (std::size_t i = 0; i < t.size(); ++i)
                y[i] = damped_cosine(truth, t[i]) + rng.uniform(-0.5 * width, 0.5 * width);
            const auto fit = fit_damped_cosine(t, y);
            CAPTURE(width);
            CAPTURE(seed);
            REQUIRE(fit.converged);
            CHECK(fit.residual_rms == doctest::Approx(width / std::sqrt(12.0)).epsilon(0.2));
        }
    }
}

TEST_CASE("constant signal fits with vanishing amplitude") {
    const auto t = linspace(0.0, 500.0, 100);
    const std::vector<double> y(t.size(), 0.42);
    const auto fit = fit_damped_cosine(t, y);
    CHECK(fit.converged);
    CHECK(fit.offset() + fit.amplitude() * std::cos(fit.phase()) == doctest::Approx(0.42));
    CHECK(std::abs(fit.amplitude()) < 1e-3);
}

TEST_CASE("fit input validation") {
    const auto t = linspace(0.0, 1.0, 9);
    const std::vector<double> y(9, 0.0);
    CHECK_THROWS_AS(fit_damped_cosine(t, y), std::invalid_argument);
    auto t10 = linspace(0.0, 1.0, 10);
    CHECK_THROWS_AS(fit_damped_cosine(t10, std::vector<double>(11, 0.0)), std::invalid_argument);
    std::swap(t10[3], t10[4]);
    CHECK_THROWS_AS(fit_damped_cosine(t10, std::vector<double>(10, 0.0)), std::invalid_argument);
    auto bad = std::vector<double>(10, 0.0);
    bad[5] = std::nan("");
    CHECK_THROWS_AS(fit_damped_cosine(linspace(0.0, 1.0, 10), bad), FitError);
}

TEST_CASE("validity filter") {
    CHECK(validity_filter(7.19, 7.0));
    CHECK_FALSE(validity_filter(7.21, 7.0));
    CHECK(validity_filter(6.80, 7.0));
    CHECK(validity_filter(7.2, 7.0));
    CHECK_FALSE(validity_filter(6.79, 7.0));
}

TEST_CASE("reject reason names round-trip") {
    for (auto r : {RejectReason::kNone, RejectReason::kOutOfRange, RejectReason::kPeaksCollide,
                   RejectReason::kEmptyWindow, RejectReason::kEdgePeak, RejectReason::kTwoPhotonOverlap,
                   RejectReason::kSingularJacobian, RejectReason::kNotConverged, RejectReason::kLowAmplitude,
                   RejectReason::kUnderResolved, RejectReason::kImplausibleCoupling}) {
        CHECK(parse_reject_reason(to_string(r)) == r);
    }
    CHECK(to_string(RejectReason::kOutOfRange) == "out_of_range");
    CHECK_THROWS(parse_reject_reason("bogus"));
}

TEST_CASE("closed-form extraction on a synthetic map") {
    // Delta~ = 0.1, A = 0.02, g = 0.02 -> Omega = g A / Delta~ = 0.004 GHz.
    const double omega = 2.0 * M_PI * 0.004;
    const auto map = synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}, {7.1, {0.5, 0.1, 0.0005, omega, 0.0}}});
    const auto r = estimate(map, hints_for(7.1));
    REQUIRE(r.valid);
    CHECK(r.reject_reason == RejectReason::kNone);
    CHECK(r.nu_q_dressed_obs == doctest::Approx(7.0));
    CHECK(r.nu_tls_dressed_obs == doctest::Approx(7.1));
    CHECK(r.detuning_dressed_obs == doctest::Approx(0.1));
    CHECK(r.g_hat == doctest::Approx(0.02).epsilon(1e-6));
    CHECK(r.nu_tls_hat == doctest::Approx(7.1 - 0.02 * 0.02 / 0.1).epsilon(1e-9));

    SUBCASE("adding the shift moves the estimate by 2 g^2 / Delta~") {
        EstimatorOptions added;
        added.add_dispersive_shift = true;
        const auto ra = estimate(map, hints_for(7.1), added);
        CHECK(ra.g_hat == r.g_hat);
        CHECK(ra.nu_tls_hat - r.nu_tls_hat == doctest::Approx(2.0 * 0.02 * 0.02 / 0.1).epsilon(1e-6));
    }

    SUBCASE("TLS below the qubit keeps g positive and shifts up") {
        // Delta~ = -0.15 -> g = Omega |Delta~| / A = 0.03.
        const auto below =
            synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}, {6.85, {0.5, 0.1, 0.0005, omega, 0.0}}});
        const auto rb = estimate(below, hints_for(6.85));
        REQUIRE(rb.valid);
        CHECK(rb.detuning_dressed_obs == doctest::Approx(-0.15));
        CHECK(rb.g_hat == doctest::Approx(0.03).epsilon(1e-6));
        CHECK(rb.nu_tls_hat == doctest::Approx(6.85 + 0.03 * 0.03 / 0.15).epsilon(1e-9));
    }
    SUBCASE("deterministic") {
        const auto again = estimate(map, hints_for(7.1));
        CHECK(again.g_hat == r.g_hat);
        CHECK(again.nu_tls_hat == r.nu_tls_hat);
        CHECK(again.fit.c == r.fit.c);
    }
}

TEST_CASE("rejection paths") {
    const double omega = 2.0 * M_PI * 0.004;
    SUBCASE("out of range") {
        const auto map = synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}});
        const auto r = estimate(map, {7.0, 7.21, 0.02});
        CHECK_FALSE(r.valid);
        CHECK(r.reject_reason == RejectReason::kOutOfRange);
    }
    SUBCASE("tiny oscillation is low amplitude") {
        const auto map = synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}, {7.1, {0.5, 5e-4, 0.0, omega, 0.0}}});
        const auto r = estimate(map, hints_for(7.1));
        CHECK_FALSE(r.valid);
        CHECK(r.reject_reason == RejectReason::kLowAmplitude);
    }
    SUBCASE("less than one period is under-resolved") {
        const auto map = synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}, {7.1, {0.5, 0.1, 0.0, 0.008, 0.0}}});
        const auto r = estimate(map, hints_for(7.1));
        CHECK_FALSE(r.valid);
        CHECK(r.reject_reason == RejectReason::kUnderResolved);
        EstimatorOptions loose;
        loose.min_periods = 0.0;
        CHECK(estimate(map, hints_for(7.1), loose).valid);
    }
    SUBCASE("hints on the same line collide") {
        const auto map = synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}});
        const auto r = estimate(map, hints_for(7.01));
        CHECK_FALSE(r.valid);
        CHECK(r.reject_reason == RejectReason::kPeaksCollide);
    }
    SUBCASE("TLS line next to the |20> line") {
        const auto map = synthetic_map({{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}, {6.9, {0.5, 0.1, 0.0, omega, 0.0}}});
        const auto r = estimate(map, hints_for(6.9));
        CHECK_FALSE(r.valid);
        CHECK(r.reject_reason == RejectReason::kTwoPhotonOverlap);
        auto no_guard = hints_for(6.9);
        no_guard.anharmonicity = std::nan("");
        CHECK(estimate(map, no_guard).valid);
    }
    SUBCASE("coupling far above the sampled range") {
        // Omega = 0.05 GHz at Delta~ = 0.1 implies g = 0.25 GHz.
        const auto map = synthetic_map(
            {{7.0, {0.5, 0.45, 0.0, 0.3, 0.0}}, {7.1, {0.5, 0.1, 0.0, 2.0 * M_PI * 0.05, 0.0}}});
        const auto r = estimate(map, hints_for(7.1));
        CHECK_FALSE(r.valid);
        CHECK(r.reject_reason == RejectReason::kImplausibleCoupling);
    }
}

TEST_CASE("picks on a simulated map sit on the dressed frequencies") {
    // g = 20 MHz, Delta = 150 MHz. The cross-resonance line is a few MHz wide, so the
    // omega grid is refined to 2 MHz to sample it.
    quantum::SystemParams p;
    p.nu_tls = 7.15;
    p.g = 0.02;
    const auto map = simulate(p.nu_tls, p.g, 401);
    const double step = map.omega_axis[1] - map.omega_axis[0];
    const auto d = quantum::dressed_frequencies(p);
    const auto pick = pick_peaks(contrast_profile(map), map.omega_axis, p.nu_q, p.nu_tls, 0.05);
    CHECK(std::abs(pick.nu_q_obs - d.nu_q_dressed) <= step);
    CHECK(std::abs(pick.nu_tls_obs - d.nu_tls_dressed) <= step);

    const auto r = estimate(map, hints_for(p.nu_tls));
    REQUIRE(r.valid);
    CHECK(std::abs(r.g_hat - p.g) / p.g < 0.1);
    CHECK(std::abs(r.nu_tls_hat - p.nu_tls) / p.nu_tls < 1e-3);
}

// Documented perturbative-regime example. The cross-resonance rate (1 MHz) gives half a
// period in the 500 ns window and the TLS contrast sits under the qubit-line wing, so this
// is reported rather than enforced.
TEST_CASE("weak coupling at large detuning" * doctest::may_fail()) {
    const auto map = simulate(7.2, 0.01, 401);
    const auto r = estimate(map, hints_for(7.2));
    REQUIRE(r.valid);
    CHECK(std::abs(r.g_hat - 0.01) / 0.01 < 0.1);
    CHECK(std::abs(r.nu_tls_hat - 7.2) / 7.2 < 1e-3);
}

TEST_CASE("strong coupling at small detuning leaves the perturbative regime") {
    // g = 45 MHz, Delta = 30 MHz: g / Delta > 1.
    for (double nu_tls : {7.03, 6.97}) {
        CAPTURE(nu_tls);
        const auto map = simulate(nu_tls, 0.045, 100);
        const auto r = estimate(map, hints_for(nu_tls));
        if (!r.valid) continue;
        const bool g_bad = std::abs(r.g_hat - 0.045) / 0.045 > 0.1;
        const bool nu_bad = std::abs(r.nu_tls_hat - nu_tls) / nu_tls > 1e-3;
        CHECK((g_bad || nu_bad));
    }
}
