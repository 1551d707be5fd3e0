#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <doctest.h>

#include "support.hpp"
#include "tlsspec/evaluation.hpp"

using namespace tlsspec;
using namespace tlsspec::eval;
namespace fs = std::filesystem;

namespace {

std::vector<Label> sample_labels() {
    return {{6.9, 0.01, 1000.0, 2000.0}, {7.1, 0.03, 5000.0, 8000.0}, {7.2, 0.05, 9000.0, 500.0},
            {6.8, 0.02, 3000.0, 12000.0}};
}

PredictionTable identity_predictions(const std::vector<Label>& labels) {
    PredictionTable t;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        PredictionRow r;
        r.index = i;
        for (std::size_t k = 0; k < kParams; ++k) r.q[k] = labels[i][k];
        t.rows.push_back(r);
    }
    return t;
}

}  // namespace

TEST_CASE("normalization onto [1, 10]") {
    const auto labels = sample_labels();
    const auto n = normalize_labels(labels);
    CHECK(n.bounds.min == Label{6.8, 0.01, 1000.0, 500.0});
    CHECK(n.bounds.max == Label{7.2, 0.05, 9000.0, 12000.0});
    CHECK(n.values[3][0] == 1.0);
    CHECK(n.values[2][0] == 10.0);
    CHECK(normalize_value(0.03, 1, n.bounds) == doctest::Approx(5.5));
    CHECK(normalize_value(5000.0, 2, n.bounds) == doctest::Approx(5.5));

    SUBCASE("no clamping outside the bounds") {
        CHECK(normalize_value(7.3, 0, n.bounds) == doctest::Approx(12.25));
        CHECK(normalize_value(6.7, 0, n.bounds) == doctest::Approx(-1.25));
    }
    SUBCASE("inverse then forward is the identity") {
        const auto back = denormalize_labels(n.values, n.bounds);
        for (std::size_t i = 0; i < labels.size(); ++i)
            for (std::size_t k = 0; k < kParams; ++k) CHECK(std::abs(back[i][k] - labels[i][k]) <= 1e-12 * labels[i][k]);
        for (double v : {1.0, 3.3, 10.0}) CHECK(std::abs(normalize_value(denormalize_value(v, 3, n.bounds), 3, n.bounds) - v) < 1e-12);
    }
    SUBCASE("supplied bounds are reused verbatim") {
        const std::vector<Label> test{{7.0, 0.03, 5000.0, 6250.0}};
        const auto t = normalize_labels(test, n.bounds);
        CHECK(t.bounds == n.bounds);
        CHECK(t.values[0][0] == doctest::Approx(5.5));
        CHECK(t.values[0][3] == doctest::Approx(5.5));
    }
    SUBCASE("degenerate columns are rejected") {
        std::vector<Label> flat = labels;
        for (auto& l : flat) l[1] = 0.02;
        CHECK_THROWS_AS(normalize_labels(flat), DegenerateColumn);
        CHECK_THROWS_AS(normalize_labels({}), DegenerateColumn);
        Bounds b = n.bounds;
        b.max[2] = b.min[2];
        CHECK_THROWS_AS(b.validate(), DegenerateColumn);
    }
}

TEST_CASE("mean squared error") {
    const auto labels = sample_labels();
    const auto bounds = compute_bounds(labels);

    SUBCASE("perfect predictions give zero") {
        const auto pred = identity_predictions(labels);
        for (auto scale : {Scale::kRaw, Scale::kNormalized}) {
            const auto m = mse(pred, labels, scale, bounds);
            CHECK(m.combined == 0.0);
            CHECK(m.samples == 4);
            for (const auto& v : m.per_parameter) CHECK(*v == 0.0);
        }
    }
    SUBCASE("unit errors give unit loss") {
        const std::vector<Label> one{{7.0, 0.02, 1000.0, 1000.0}};
        PredictionTable pred;
        pred.rows.push_back({0, "cnn", {8.0, 1.02, 1001.0, 999.0}});
        const auto m = mse(pred, one, Scale::kRaw);
        for (const auto& v : m.per_parameter) CHECK(*v == doctest::Approx(1.0));
        CHECK(m.combined == doctest::Approx(1.0));
    }
    SUBCASE("L is the mean of the per-parameter MSEs and equals the 1/(4N) sum") {
        PredictionTable pred = identity_predictions(labels);
        std::mt19937_64 rng(4);
        std::normal_distribution<double> noise(0.0, 1.0);
        double total = 0.0;
        for (auto& row : pred.rows) {
            for (std::size_t k = 0; k < kParams; ++k) {
                const double e = noise(rng) * (bounds.max[k] - bounds.min[k]) * 0.1;
                *row.q[k] += e;
                total += e * e;
            }
        }
        const auto m = mse(pred, labels, Scale::kRaw);
        double mean = 0.0;
        for (const auto& v : m.per_parameter) mean += *v / 4.0;
        CHECK(m.combined == doctest::Approx(mean).epsilon(1e-12));
        CHECK(m.combined == doctest::Approx(total / (4.0 * labels.size())).epsilon(1e-12));

        SUBCASE("row order does not matter") {
            auto shuffled = pred;
            std::reverse(shuffled.rows.begin(), shuffled.rows.end());
            const auto ms = mse(shuffled, labels, Scale::kNormalized, bounds);
            const auto mo = mse(pred, labels, Scale::kNormalized, bounds);
            CHECK(ms.combined == doctest::Approx(mo.combined).epsilon(1e-14));
        }
    }
    SUBCASE("absent components are skipped") {
        PredictionTable pred = identity_predictions(labels);
        for (auto& row : pred.rows) {
            *row.q[0] += 0.1;
            row.q[2].reset();
            row.q[3].reset();
        }
        const auto m = mse(pred, labels, Scale::kRaw);
        CHECK(*m.per_parameter[0] == doctest::Approx(0.01));
        CHECK(*m.per_parameter[1] == 0.0);
        CHECK_FALSE(m.per_parameter[2].has_value());
        CHECK_FALSE(m.per_parameter[3].has_value());
        CHECK(m.combined == doctest::Approx(0.005));
        CHECK(pred.present() == std::array<bool, kParams>{true, true, false, false});
    }
    SUBCASE("index problems") {
        PredictionTable empty;
        CHECK_THROWS_AS(mse(empty, labels, Scale::kRaw), IndexMismatch);
        auto unknown = identity_predictions(labels);
        unknown.rows[0].index = 9;
        CHECK_THROWS_AS(mse(unknown, labels, Scale::kRaw), IndexMismatch);
        auto dup = identity_predictions(labels);
        dup.rows[1].index = 0;
        CHECK_THROWS_AS(mse(dup, labels, Scale::kRaw), IndexMismatch);
        CHECK_THROWS_AS(mse(identity_predictions(labels), labels, Scale::kNormalized), std::invalid_argument);
    }
}

TEST_CASE("rank correlation and percentiles") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman({1, 2, 3, 4}, {5, 5, 5, 5}) == 0.0);
    // Monotone transforms leave the rank correlation unchanged.
    const std::vector<double> x{0.3, 1.2, 0.7, 2.5, 1.9};
    const std::vector<double> y{2.0, 0.4, 1.1, 0.2, 0.3};
    std::vector<double> y3(y.size());
    std::transform(y.begin(), y.end(), y3.begin(), [](double v) { return v * v * v; });
    CHECK(spearman(x, y) == doctest::Approx(spearman(x, y3)));
    // Ties get average ranks: x ranks (1, 2.5, 2.5, 4), y ranks (1, 2, 3, 4).
    CHECK(spearman({1, 2, 2, 3}, {1, 2, 3, 4}) == doctest::Approx(0.9486832980505138));
    CHECK_THROWS_AS(spearman({1, 2}, {1}), std::invalid_argument);

    CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3.0);
    CHECK(percentile({1, 2, 3, 4, 5}, 90) == doctest::Approx(4.6));
    CHECK(percentile({4, 1}, 0) == 1.0);
    CHECK(percentile({4, 1}, 100) == 4.0);
    CHECK_THROWS_AS(percentile({}, 50), std::invalid_argument);
    CHECK_THROWS_AS(percentile({1}, 101), std::invalid_argument);
}

TEST_CASE("error versus detuning") {
    SUBCASE("errors falling as 1/|Delta| give decreasing medians") {
        std::vector<DetuningSample> s;
        for (int i = 0; i < 100; ++i) {
            const double d = 0.01 + 0.19 * i / 99.0;
            s.push_back({d, 1e-4 / d, 1e-3 / d});
        }
        const auto r = error_vs_detuning(s, 5);
        REQUIRE(r.bins.size() == 5);
        for (std::size_t b = 1; b < r.bins.size(); ++b) {
            CHECK(r.bins[b].nu_median < r.bins[b - 1].nu_median);
            CHECK(r.bins[b].g_median < r.bins[b - 1].g_median);
            CHECK(r.bins[b].lo == doctest::Approx(r.bins[b - 1].hi));
        }
        std::size_t total = 0;
        for (const auto& b : r.bins) {
            total += b.count;
            CHECK(b.nu_p90 >= b.nu_median);
        }
        CHECK(total == 100);
        CHECK(r.spearman_nu == doctest::Approx(-1.0));
        CHECK(r.spearman_g == doctest::Approx(-1.0));
    }
    SUBCASE("constant errors show no correlation") {
        std::vector<DetuningSample> s;
        for (int i = 0; i < 50; ++i) s.push_back({0.01 * (i + 1), 1e-3, 2e-3});
        const auto r = error_vs_detuning(s, 4);
        CHECK(r.spearman_nu == 0.0);
        CHECK(r.spearman_g == 0.0);
    }
    SUBCASE("too few populated bins") {
        CHECK_THROWS_AS(error_vs_detuning({{0.1, 1.0, 1.0}, {0.1, 2.0, 2.0}}), std::invalid_argument);
        CHECK_THROWS_AS(error_vs_detuning({{0.1, 1.0, 1.0}}), std::invalid_argument);
        CHECK_THROWS_AS(error_vs_detuning({{0.1, 1.0, 1.0}, {0.2, 1.0, 1.0}}, 1), std::invalid_argument);
    }
}

TEST_CASE("scatter export") {
    const auto dir = testing::fresh_dir("scatter");
    fs::create_directories(dir);
    const auto labels = sample_labels();
    auto pred = identity_predictions(labels);

    scatter_export(pred, labels, dir / "id.csv");
    const auto rows = read_scatter_csv(dir / "id.csv");
    REQUIRE(rows.size() == 4 * labels.size());
    for (const auto& r : rows) {
        CHECK(r.target == r.prediction);
        CHECK(r.scale == "raw");
    }

    // 17 significant digits survive the text round trip exactly.
    pred.rows[2].q[1] = 0.1 + 0.2;
    pred.rows[1].q[3].reset();
    scatter_export(pred, labels, dir / "n.csv", Scale::kNormalized, compute_bounds(labels));
    const auto norm = read_scatter_csv(dir / "n.csv");
    CHECK(norm.size() == 4 * labels.size() - 1);
    const auto it = std::find_if(norm.begin(), norm.end(), [](const auto& r) { return r.index == 2 && r.parameter == "g"; });
    REQUIRE(it != norm.end());
    CHECK(it->prediction == normalize_value(0.1 + 0.2, 1, compute_bounds(labels)));
    CHECK(it->scale == "normalized");
    fs::remove_all(dir);
}

TEST_CASE("predictions CSV") {
    const auto dir = testing::fresh_dir("predictions");
    fs::create_directories(dir);
    const auto labels = sample_labels();

    SUBCASE("round trip with bounds and partial columns") {
        PredictionTable t = identity_predictions(labels);
        t.bounds = compute_bounds(labels);
        for (auto& row : t.rows) {
            row.source = "analytic";
            row.q[2].reset();
            row.q[3].reset();
        }
        *t.rows[0].q[0] = 1.0 / 3.0;
        write_predictions_csv(dir / "p.csv", t);
        const auto back = read_predictions_csv(dir / "p.csv");
        REQUIRE(back.rows.size() == t.rows.size());
        REQUIRE(back.bounds.has_value());
        CHECK(*back.bounds == *t.bounds);
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            CHECK(back.rows[i].index == t.rows[i].index);
            CHECK(back.rows[i].source == "analytic");
            CHECK(back.rows[i].q == t.rows[i].q);
        }
    }
    SUBCASE("externally written file with extra columns") {
        std::ofstream(dir / "ext.csv") << "index,source,nu_tls,g,T1_tls,Tphi_tls,epoch\n"
                                          "0,cnn,6.9,0.011,1100,2100,7\n"
                                          "1,cnn,7.1,,5000,,7\n";
        const auto t = read_predictions_csv(dir / "ext.csv");
        REQUIRE(t.rows.size() == 2);
        CHECK_FALSE(t.bounds.has_value());
        CHECK(*t.rows[0].q[1] == 0.011);
        CHECK_FALSE(t.rows[1].q[1].has_value());
        CHECK_FALSE(t.rows[1].q[3].has_value());
        CHECK(*t.rows[1].q[2] == 5000.0);
    }
    SUBCASE("malformed files") {
        std::ofstream(dir / "noheader.csv") << "0,cnn,6.9,0.01,1,1\n";
        CHECK_THROWS_AS(read_predictions_csv(dir / "noheader.csv"), SchemaError);
        std::ofstream(dir / "bad.csv") << "index,source,nu_tls,g,T1_tls,Tphi_tls\n0,cnn,abc,0.01,1,1\n";
        CHECK_THROWS_AS(read_predictions_csv(dir / "bad.csv"), SchemaError);
        std::ofstream(dir / "partial_bounds.csv") << "# bounds,nu_tls,6.75,7.25\nindex,source,nu_tls,g,T1_tls,Tphi_tls\n";
        CHECK_THROWS_AS(read_predictions_csv(dir / "partial_bounds.csv"), SchemaError);
        CHECK_THROWS(read_predictions_csv(dir / "missing.csv"));
    }
    fs::remove_all(dir);
}

TEST_CASE("estimates CSV and conversion to predictions") {
    const auto dir = testing::fresh_dir("estimates");
    fs::create_directories(dir);
    std::vector<EstimateRow> rows(3);
    rows[0].index = 0;
    rows[0].result.valid = true;
    rows[0].result.nu_tls_hat = 7.104;
    rows[0].result.g_hat = 0.0201;
    rows[0].result.nu_q_dressed_obs = 6.998;
    rows[0].result.nu_tls_dressed_obs = 7.102;
    rows[0].result.detuning_dressed_obs = 0.104;
    rows[0].result.fit.c = {0.5, 0.1, 0.001, 0.025, 3.0};
    rows[0].result.fit.residual_rms = 0.003;
    rows[0].result.fit.converged = true;
    rows[1].index = 1;
    rows[1].result.reject_reason = estimator::RejectReason::kOutOfRange;
    rows[2].index = 2;
    rows[2].result.reject_reason = estimator::RejectReason::kLowAmplitude;
    rows[2].result.nu_tls_hat = 6.9;

    write_estimates_csv(dir / "e.csv", rows);
    const auto back = read_estimates_csv(dir / "e.csv");
    REQUIRE(back.size() == 3);
    CHECK(back[0].result.valid);
    CHECK(back[0].result.nu_tls_hat == 7.104);
    CHECK(back[0].result.detuning_dressed_obs == 0.104);
    CHECK(back[0].result.fit.c == rows[0].result.fit.c);
    CHECK(back[0].result.fit.residual_rms == 0.003);
    CHECK_FALSE(back[1].result.valid);
    CHECK(back[1].result.reject_reason == estimator::RejectReason::kOutOfRange);
    CHECK(std::isnan(back[1].result.g_hat));
    CHECK(back[2].result.reject_reason == estimator::RejectReason::kLowAmplitude);

    const auto pred = estimates_to_predictions(back);
    REQUIRE(pred.rows.size() == 1);
    CHECK(pred.rows[0].source == "analytic");
    CHECK(*pred.rows[0].q[0] == 7.104);
    CHECK(*pred.rows[0].q[1] == 0.0201);
    CHECK(pred.present() == std::array<bool, kParams>{true, true, false, false});

    std::ofstream(dir / "wrong.csv") << "index,source,nu_tls\n";
    CHECK_THROWS_AS(read_estimates_csv(dir / "wrong.csv"), SchemaError);
    fs::remove_all(dir);
}

TEST_CASE("report layout") {
    const auto labels = sample_labels();
    const auto bounds = compute_bounds(labels);
    const auto pred = identity_predictions(labels);
    auto analytic = pred;
    for (auto& r : analytic.rows) r.q[2].reset();
    const std::vector<ModelReport> models{
        {"cnn", mse(pred, labels, Scale::kRaw), mse(pred, labels, Scale::kNormalized, bounds)},
        {"analytic", mse(analytic, labels, Scale::kRaw), mse(analytic, labels, Scale::kNormalized, bounds)}};
    const auto text = format_report(models);
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 7);
    CHECK(lines[0].find("cnn raw") != std::string::npos);
    CHECK(lines[0].find("analytic norm") != std::string::npos);
    CHECK(lines[1].rfind("nu_tls", 0) == 0);
    CHECK(lines[4].rfind("Tphi_tls", 0) == 0);
    CHECK(lines[3].find("absent") != std::string::npos);
    CHECK(lines[2].find("absent") == std::string::npos);
    CHECK(lines[5].rfind("L", 0) == 0);
    CHECK(lines[6].rfind("samples", 0) == 0);
}
