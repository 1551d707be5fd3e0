// dataset.hpp: Parameter sampling, labeled bulk generation and the on-disk dataset layout:
//
//   <dir>/manifest.json              written last; its presence marks a complete dataset
//   <dir>/samples/sample_<index>.tlsm
//   <dir>/png/sample_<index>.png     optional

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlsspec/quantum.hpp"
#include "tlsspec/random.hpp"
#include "tlsspec/spectroscopy.hpp"

namespace tlsspec::dataset {

inline constexpr int kFormatVersion = 1;

struct Range {
    double lo = 0.0;
    double hi = 1.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
    bool operator==(const Range&) const = default;
};

// Uniform sampling ranges. Frequencies in GHz (ordinary), times in ns.
struct ParameterRanges {
    double nu_q = 7.0;
    Range nu_tls{6.75, 7.25};
    Range U{0.150, 0.300};
    Range g{0.005, 0.050};
    Range T1_q{1000.0, 10000.0};
    Range Tphi_q{500.0, 5000.0};
    Range T1_tls{500.0, 10000.0};
    Range Tphi_tls{500.0, 20000.0};

    bool operator==(const ParameterRanges&) const = default;
};

inline constexpr Range kNoiseWidthRange{0.01, 0.2};

// Draw order: nu_tls, U, g, T1_q, Tphi_q, T1_tls, Tphi_tls. nu_q is fixed.
quantum::SystemParams sample_params(Rng& rng, const ParameterRanges& ranges = {},
                                    double amplitude = 0.02);

enum class NoiseMode { kClean, kNoisy };
std::string to_string(NoiseMode mode);
NoiseMode parse_noise_mode(const std::string& text);

struct SampleLabel {
    // Regression target q = [nu_tls, g, T1_tls, Tphi_tls]
    double nu_tls = 0.0;
    double g = 0.0;
    double T1_tls = 0.0;
    double Tphi_tls = 0.0;
    // Nuisance parameters
    double nu_q = 0.0;
    double U = 0.0;
    double T1_q = 0.0;
    double Tphi_q = 0.0;
    double A = 0.0;

    double noise_width = 0.0;
    std::uint64_t seed = 0;  // per-sample stream seed

    std::array<double, 4> target() const { return {nu_tls, g, T1_tls, Tphi_tls}; }
    quantum::SystemParams params() const;
    static SampleLabel from_params(const quantum::SystemParams& p);
    bool operator==(const SampleLabel&) const = default;
};

struct SampleRecord {
    std::size_t index = 0;
    std::string file;  // relative to the dataset directory
    std::string sha256;
    int attempts = 1;  // > 1 when integration failures forced redraws
    SampleLabel label;
};

struct DatasetManifest {
    int format_version = kFormatVersion;
    std::uint64_t global_seed = 0;
    NoiseMode noise_mode = NoiseMode::kClean;
    spectro::ProtocolConfig protocol;
    ParameterRanges ranges;
    std::vector<SampleRecord> records;

    std::size_t sample_count() const { return records.size(); }
    std::vector<double> omega_axis() const { return protocol.omega.points(); }
    std::vector<double> time_axis() const { return protocol.time.points(); }
};

void to_json(nlohmann::json& j, const SampleLabel& label);
void from_json(const nlohmann::json& j, SampleLabel& label);
nlohmann::json manifest_to_json(const DatasetManifest& manifest);
// Throws std::runtime_error on schema violations (count mismatch, duplicate file names,
// unsupported format_version).
DatasetManifest manifest_from_json(const nlohmann::json& j);

std::filesystem::path manifest_path(const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);
void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);

std::string sample_file_name(std::size_t index);

// Everything drawn for one sample before simulation.
struct SampleDraw {
    quantum::SystemParams params;
    double noise_width = 0.0;
    std::uint64_t noise_seed = 0;
    std::uint64_t sample_seed = 0;
};

std::uint64_t derive_sample_seed(std::uint64_t global_seed, std::size_t index);

// Stateful per-sample draws: parameters come from one substream (redrawn on failure),
// noise from another, so clean and noisy datasets with the same seed share parameters.
class SampleStreams {
public:
    SampleStreams(std::uint64_t sample_seed, NoiseMode mode);
    quantum::SystemParams next_params(const ParameterRanges& ranges, double amplitude);
    double noise_width() const { return noise_width_; }
    std::uint64_t noise_seed() const { return noise_seed_; }

private:
    Rng params_rng_;
    double noise_width_ = 0.0;
    std::uint64_t noise_seed_ = 0;
};

SampleDraw draw_sample(std::uint64_t global_seed, std::size_t index, NoiseMode mode,
                       const ParameterRanges& ranges = {}, double amplitude = 0.02);

struct GeneratedSample {
    spectro::SpectroscopyMap map;  // noise applied, double precision
    SampleLabel label;
    int attempts = 1;
};

using LogFn = std::function<void(const std::string&)>;

inline constexpr int kMaxAttempts = 20;

// Generates sample `index` from (global_seed, index) alone.
GeneratedSample generate_sample(std::uint64_t global_seed, std::size_t index, NoiseMode mode,
                                const spectro::ProtocolConfig& protocol,
                                const ParameterRanges& ranges = {}, const LogFn& log = {});

struct GenerateOptions {
    std::size_t count = 1;
    spectro::ProtocolConfig protocol;
    NoiseMode noise_mode = NoiseMode::kClean;
    std::uint64_t seed = 0;
    int parallelism = 1;
    ParameterRanges ranges;
    bool write_png = false;
    LogFn log;
};

// Writes samples/ (and png/) under out_dir, then manifest.json. Refuses a directory that
// already holds a manifest.
DatasetManifest generate_dataset(const std::filesystem::path& out_dir, const GenerateOptions& options);

// Loads sample `index` with its axes from a dataset directory.
spectro::SpectroscopyMap load_sample(const std::filesystem::path& dir,
                                     const DatasetManifest& manifest, std::size_t index);

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

// Linear map of [min P, max P] onto 0..255 (floor), row 0 = smallest t_A,
// column 0 = smallest nu_d. A constant map becomes all zeros.
GrayImage to_gray8(const spectro::SpectroscopyMap& map);
void export_png(const spectro::SpectroscopyMap& map, const std::filesystem::path& path);
GrayImage read_png_gray(const std::filesystem::path& path);

}  // namespace tlsspec::dataset
