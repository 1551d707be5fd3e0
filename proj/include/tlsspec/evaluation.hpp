// evaluation.hpp: Label normalization onto [1, 10], MSE tables in raw and normalized
// units, rank correlation, error-vs-detuning bins and the CSV formats shared with the
// CNN trainer.
//
// Predictions CSV (one row per sample, empty cell = component not predicted):
//   # bounds,<name>,<min>,<max>      optional, one line per component
//   index,source,nu_tls,g,T1_tls,Tphi_tls[,extra columns ignored]

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tlsspec/estimator.hpp"

namespace tlsspec::eval {

inline constexpr std::size_t kParams = 4;
inline constexpr std::array<const char*, kParams> kParameterNames{"nu_tls", "g", "T1_tls", "Tphi_tls"};

using Label = std::array<double, kParams>;

class DegenerateColumn : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IndexMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Bounds {
    Label min{};
    Label max{};
    // Throws DegenerateColumn unless every component is finite with max > min.
    void validate() const;
    bool operator==(const Bounds&) const = default;
};

Bounds compute_bounds(const std::vector<Label>& Q);

double normalize_value(double q, std::size_t component, const Bounds& bounds);
double denormalize_value(double q_norm, std::size_t component, const Bounds& bounds);

struct NormalizedLabels {
    std::vector<Label> values;
    Bounds bounds;
};

// q_norm = 1 + 9 (q - q_min) / (q_max - q_min), no clamping. Without bounds they are
// computed from Q itself.
NormalizedLabels normalize_labels(const std::vector<Label>& Q, const std::optional<Bounds>& bounds = {});
std::vector<Label> denormalize_labels(const std::vector<Label>& Q_norm, const Bounds& bounds);

struct PredictionRow {
    std::size_t index = 0;
    std::string source = "cnn";  // "cnn" or "analytic"
    std::array<std::optional<double>, kParams> q{};
};

struct PredictionTable {
    std::vector<PredictionRow> rows;
    std::optional<Bounds> bounds;

    // Component k is present when any row carries it.
    std::array<bool, kParams> present() const;
};

void write_predictions_csv(const std::filesystem::path& path, const PredictionTable& table);
PredictionTable read_predictions_csv(const std::filesystem::path& path);

enum class Scale { kRaw, kNormalized };
std::string to_string(Scale scale);

struct MseResult {
    std::array<std::optional<double>, kParams> per_parameter{};
    // Mean over all present squared component errors; with every component present this
    // is 1/(4N) times the summed squared error norms.
    double combined = 0.0;
    std::size_t samples = 0;
};

// labels[i] is the target of sample index i. Throws IndexMismatch for unknown or duplicate
// indices and for an empty table. `bounds` is required for Scale::kNormalized.
MseResult mse(const PredictionTable& pred, const std::vector<Label>& labels, Scale scale,
              const std::optional<Bounds>& bounds = {});

// Spearman rank correlation with average ranks for ties. Returns 0 when either input has
// no rank variance.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Linear interpolation between order statistics, p in [0, 100].
double percentile(std::vector<double> values, double p);

struct DetuningSample {
    double abs_detuning = 0.0;  // GHz
    double nu_error = 0.0;      // |nu_hat - nu|, GHz
    double g_error = 0.0;       // |g_hat - g|, GHz
};

struct DetuningBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double nu_median = 0.0;
    double nu_p90 = 0.0;
    double g_median = 0.0;
    double g_p90 = 0.0;
};

struct DetuningReport {
    std::vector<DetuningBin> bins;  // populated bins only, increasing |Delta|
    double spearman_nu = 0.0;       // corr(|Delta|, nu error)
    double spearman_g = 0.0;        // corr(|Delta|, g error)
};

// Equal-width bins over the observed |Delta| range. Throws std::invalid_argument when
// fewer than two bins are populated.
DetuningReport error_vs_detuning(const std::vector<DetuningSample>& samples, std::size_t bin_count = 5);

// index,parameter,target,prediction,scale with 17 significant digits; absent components
// are skipped.
void scatter_export(const PredictionTable& pred, const std::vector<Label>& labels,
                    const std::filesystem::path& path, Scale scale = Scale::kRaw,
                    const std::optional<Bounds>& bounds = {});

struct ScatterRow {
    std::size_t index = 0;
    std::string parameter;
    double target = 0.0;
    double prediction = 0.0;
    std::string scale;
};
std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path);

struct ModelReport {
    std::string name;
    MseResult raw;
    MseResult normalized;
};

// Four parameter rows plus L, one raw and one normalized column per model.
std::string format_report(const std::vector<ModelReport>& models);

struct EstimateRow {
    std::size_t index = 0;
    estimator::EstimateResult result;
};

// index,valid,reject_reason,nu_tls_hat,g_hat,nu_q_dressed_obs,nu_tls_dressed_obs,
// detuning_dressed_obs,c1,c2,c3,c4,c5,residual_rms
void write_estimates_csv(const std::filesystem::path& path, const std::vector<EstimateRow>& rows);
std::vector<EstimateRow> read_estimates_csv(const std::filesystem::path& path);

// Valid rows only, source "analytic", nu_tls and g present.
PredictionTable estimates_to_predictions(const std::vector<EstimateRow>& rows);

}  // namespace tlsspec::eval
