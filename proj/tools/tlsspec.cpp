// tlsspec: generate, estimate, evaluate and render two-tone spectroscopy datasets.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "tlsspec/dataset.hpp"
#include "tlsspec/estimator.hpp"
#include "tlsspec/evaluation.hpp"
#include "tlsspec/map_io.hpp"
#include "tlsspec/parallel.hpp"

namespace fs = std::filesystem;
using namespace tlsspec;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void log_line(const std::string& msg) { fmt::print(stderr, "{}\n", msg); }

// Effective options of one subcommand, readable back through the top-level --config.
void persist_config(const CLI::App& app, const std::string& subcommand, const fs::path& path) {
    std::istringstream all(app.config_to_str(true, false));
    std::string text;
    for (std::string line; std::getline(all, line);) {
        if (line.starts_with(subcommand + ".")) text += line + "\n";
    }
    io::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

int default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

// ---- generate ----

struct GenerateArgs {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string noise = "clean";
    std::string out;
    std::string grid_omega = "6.6:7.4:100";
    std::string grid_t = "0:500:100";
    double amplitude = 0.02;
    int parallelism = default_threads();
    bool png = false;
    std::string integrator = "propagator";
};

void add_generate(CLI::App& app, GenerateArgs& a) {
    auto* cmd = app.add_subcommand("generate", "Simulate a labeled dataset of spectroscopy maps");
    cmd->add_option("--n", a.n, "Number of samples")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--seed", a.seed, "Global seed")->capture_default_str();
    cmd->add_option("--noise", a.noise, "clean or noisy")->check(CLI::IsMember({"clean", "noisy"}))->capture_default_str();
    cmd->add_option("--out", a.out, "Output dataset directory")->required();
    cmd->add_option("--grid-omega", a.grid_omega, "Drive frequency grid lo:hi:n (GHz)")->capture_default_str();
    cmd->add_option("--grid-t", a.grid_t, "Pulse A duration grid lo:hi:n (ns)")->capture_default_str();
    cmd->add_option("--amplitude", a.amplitude, "Drive amplitude A (GHz)")->capture_default_str();
    cmd->add_option("--parallelism", a.parallelism, "Worker threads")
        ->envname("TLS_SPECTRO_THREADS")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_flag("--png", a.png, "Also write 8-bit grayscale PNGs");
    cmd->add_option("--integrator", a.integrator, "propagator, dopri (adaptive RK 1e-6/1e-8) or dopri-tight (1e-8/1e-10)")
        ->check(CLI::IsMember({"propagator", "dopri", "dopri-tight"}))
        ->capture_default_str();
}

quantum::EvolveOptions parse_integrator(const std::string& name) {
    if (name == "propagator") return quantum::EvolveOptions::bulk();
    if (name == "dopri") return quantum::EvolveOptions::bulk_rk();
    if (name == "dopri-tight") return quantum::EvolveOptions::test_precision();
    throw UsageError(fmt::format("unknown integrator '{}'", name));
}

int run_generate(const CLI::App& app, const GenerateArgs& a) {
    dataset::GenerateOptions opts;
    try {
        opts.protocol.omega = spectro::UniformGrid::parse(a.grid_omega);
        opts.protocol.time = spectro::UniformGrid::parse(a.grid_t);
        opts.protocol.amplitude = a.amplitude;
        opts.protocol.evolve = parse_integrator(a.integrator);
        opts.protocol.validate();
        opts.noise_mode = dataset::parse_noise_mode(a.noise);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    if (fs::exists(dataset::manifest_path(a.out))) {
        throw UsageError(fmt::format("{} already holds a dataset; refusing to overwrite", a.out));
    }
    opts.count = a.n;
    opts.seed = a.seed;
    opts.parallelism = a.parallelism;
    opts.write_png = a.png;
    opts.log = log_line;

    const auto manifest = dataset::generate_dataset(a.out, opts);
    persist_config(app, "generate", fs::path(a.out) / "run_config.ini");
    fmt::print("wrote {} samples ({}x{}) to {}\n", manifest.sample_count(), opts.protocol.time.n,
               opts.protocol.omega.n, a.out);
    return 0;
}

// ---- estimate ----

struct EstimateArgs {
    std::string dataset;
    std::string out;
    int parallelism = default_threads();
    double window = 0.05;
    bool no_curation = false;
};

void add_estimate(CLI::App& app, EstimateArgs& a) {
    auto* cmd = app.add_subcommand("estimate", "Run the analytical estimator over a dataset");
    cmd->add_option("--dataset", a.dataset, "Dataset directory")->required();
    cmd->add_option("--out", a.out, "Estimates CSV")->required();
    cmd->add_option("--parallelism", a.parallelism, "Worker threads")
        ->envname("TLS_SPECTRO_THREADS")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--window", a.window, "Peak search half-width (GHz)")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_flag("--no-curation", a.no_curation, "Disable the edge, two-photon, period and coupling-plausibility rejections");
}

int run_estimate(const CLI::App& app, const EstimateArgs& a) {
    const auto manifest = dataset::read_manifest(a.dataset);
    estimator::EstimatorOptions opts;
    opts.window = a.window;
    if (a.no_curation) {
        opts.reject_edge_peaks = false;
        opts.two_photon_guard = 0.0;
        opts.min_periods = 0.0;
        opts.max_coupling = 0.0;
    }

    std::vector<eval::EstimateRow> rows(manifest.sample_count());
    parallel_for(rows.size(), a.parallelism, [&](std::size_t i) {
        const auto& label = manifest.records[i].label;
        const auto map = dataset::load_sample(a.dataset, manifest, i);
        const estimator::EstimateHints hints{label.nu_q, label.nu_tls, label.A, label.U};
        rows[i] = {manifest.records[i].index, estimator::estimate(map, hints, opts)};
    });
    eval::write_estimates_csv(a.out, rows);
    persist_config(app, "estimate", fs::path(a.out).string() + ".config.ini");

    std::map<std::string, std::size_t> reasons;
    for (const auto& row : rows) ++reasons[estimator::to_string(row.result.reject_reason)];
    fmt::print("{} samples:", rows.size());
    for (const auto& [name, count] : reasons) fmt::print(" {}={}", name == "none" ? "valid" : name, count);
    fmt::print("\n");
    return 0;
}

// ---- evaluate ----

struct EvaluateArgs {
    std::string dataset;
    std::vector<std::string> predictions;
    std::string bounds_manifest;
    std::string scatter_dir;
    std::string out;
    std::size_t bins = 5;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
    auto* cmd = app.add_subcommand("evaluate", "MSE tables for predictions or analytical estimates");
    cmd->add_option("--dataset", a.dataset, "Dataset directory holding the labels")->required();
    cmd->add_option("--predictions", a.predictions, "NAME=path to a predictions or estimates CSV (repeatable)")
        ->required();
    cmd->add_option("--bounds-manifest", a.bounds_manifest,
                    "Training dataset whose labels fix the normalization bounds");
    cmd->add_option("--scatter-dir", a.scatter_dir, "Write scatter CSVs per model and scale here");
    cmd->add_option("--out", a.out, "Also write the report to this file");
    cmd->add_option("--bins", a.bins, "Detuning bins for analytical estimates")->check(CLI::Range(2, 100))->capture_default_str();
}

bool is_estimates_file(const fs::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "r");
    if (!f) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    char buf[32] = {};
    const std::size_t got = std::fread(buf, 1, sizeof(buf) - 1, f);
    std::fclose(f);
    return std::string(buf, got).starts_with("index,valid,reject_reason");
}

std::vector<eval::Label> manifest_labels(const dataset::DatasetManifest& m) {
    std::vector<eval::Label> labels;
    labels.reserve(m.sample_count());
    for (const auto& r : m.records) labels.push_back(r.label.target());
    return labels;
}

int run_evaluate(const EvaluateArgs& a) {
    std::vector<std::pair<std::string, fs::path>> inputs;
    for (const auto& spec : a.predictions) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            throw UsageError(fmt::format("--predictions expects NAME=path, got '{}'", spec));
        }
        inputs.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }

    const auto manifest = dataset::read_manifest(a.dataset);
    const auto labels = manifest_labels(manifest);

    std::vector<std::pair<std::string, eval::PredictionTable>> tables;
    std::vector<std::pair<std::string, std::vector<eval::EstimateRow>>> estimates;
    for (const auto& [name, path] : inputs) {
        if (is_estimates_file(path)) {
            auto rows = eval::read_estimates_csv(path);
            tables.emplace_back(name, eval::estimates_to_predictions(rows));
            estimates.emplace_back(name, std::move(rows));
        } else {
            tables.emplace_back(name, eval::read_predictions_csv(path));
        }
    }

    // Bounds: training manifest, else bounds carried by a predictions file, else these labels.
    std::optional<eval::Bounds> bounds;
    std::string bounds_source;
    if (!a.bounds_manifest.empty()) {
        bounds = eval::compute_bounds(manifest_labels(dataset::read_manifest(a.bounds_manifest)));
        bounds_source = a.bounds_manifest;
    } else {
        for (const auto& [name, t] : tables) {
            if (t.bounds) {
                bounds = t.bounds;
                bounds_source = "predictions file " + name;
                break;
            }
        }
        if (!bounds) {
            bounds = eval::compute_bounds(labels);
            bounds_source = "evaluated labels";
        }
    }

    std::vector<eval::ModelReport> reports;
    for (const auto& [name, t] : tables) {
        if (t.rows.empty()) {
            log_line(fmt::format("{}: no valid rows, skipped", name));
            continue;
        }
        reports.push_back({name, eval::mse(t, labels, eval::Scale::kRaw),
                           eval::mse(t, labels, eval::Scale::kNormalized, bounds)});
        if (!a.scatter_dir.empty()) {
            fs::create_directories(a.scatter_dir);
            for (auto scale : {eval::Scale::kRaw, eval::Scale::kNormalized}) {
                eval::scatter_export(t, labels,
                                     fs::path(a.scatter_dir) / fmt::format("scatter_{}_{}.csv", name, eval::to_string(scale)),
                                     scale, bounds);
            }
        }
    }

    std::string text = fmt::format("MSE on {} (bounds from {})\n", a.dataset, bounds_source);
    text += eval::format_report(reports);

    for (const auto& [name, rows] : estimates) {
        std::vector<eval::DetuningSample> samples;
        for (const auto& [index, r] : rows) {
            if (!r.valid) continue;
            const auto& label = manifest.records.at(index).label;
            samples.push_back({std::abs(label.nu_q - label.nu_tls), std::abs(r.nu_tls_hat - label.nu_tls),
                               std::abs(r.g_hat - label.g)});
        }
        text += fmt::format("\n{}: {} of {} samples valid\n", name, samples.size(), rows.size());
        try {
            const auto rep = eval::error_vs_detuning(samples, a.bins);
            text += fmt::format("{:>9} {:>9} {:>6} {:>12} {:>12} {:>12} {:>12}\n", "|D| lo", "|D| hi", "count",
                                "nu med", "nu p90", "g med", "g p90");
            for (const auto& b : rep.bins) {
                text += fmt::format("{:>9.4f} {:>9.4f} {:>6} {:>12.4g} {:>12.4g} {:>12.4g} {:>12.4g}\n", b.lo, b.hi,
                                    b.count, b.nu_median, b.nu_p90, b.g_median, b.g_p90);
            }
            text += fmt::format("spearman(|D|, nu error) = {:.4f}\nspearman(|D|, g error) = {:.4f}\n",
                                rep.spearman_nu, rep.spearman_g);
        } catch (const std::invalid_argument& e) {
            text += fmt::format("detuning bins unavailable: {}\n", e.what());
        }
    }

    fmt::print("{}", text);
    if (!a.out.empty()) {
        io::write_file_atomic(a.out, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    }
    return 0;
}

// ---- render ----

struct RenderArgs {
    std::string dataset;
    std::optional<std::size_t> index;
    bool all = false;
    std::string file;
    std::string out;
};

void add_render(CLI::App& app, RenderArgs& a) {
    auto* cmd = app.add_subcommand("render", "Export maps as 8-bit grayscale PNG");
    auto* ds = cmd->add_option("--dataset", a.dataset, "Dataset directory");
    auto* idx = cmd->add_option("--index", a.index, "Sample index")->needs(ds);
    auto* all = cmd->add_flag("--all", a.all, "Every sample of the dataset")->needs(ds);
    auto* file = cmd->add_option("--file", a.file, "A single .tlsm file")->excludes(ds);
    idx->excludes(all);
    cmd->add_option("--out", a.out, "PNG path (directory with --all)")->required();
    (void)file;
}

int run_render(const RenderArgs& a) {
    if (!a.file.empty()) {
        if (!fs::exists(a.file)) throw std::runtime_error(fmt::format("no such file: {}", a.file));
        spectro::SpectroscopyMap map;
        map.P = io::read_tlsm(a.file);
        dataset::export_png(map, a.out);
        return 0;
    }
    if (a.dataset.empty()) throw UsageError("render needs --file or --dataset with --index / --all");
    const auto manifest = dataset::read_manifest(a.dataset);
    if (a.all) {
        fs::create_directories(a.out);
        for (std::size_t i = 0; i < manifest.sample_count(); ++i) {
            dataset::export_png(dataset::load_sample(a.dataset, manifest, i),
                                fs::path(a.out) / (dataset::sample_file_name(i) + ".png"));
        }
        fmt::print("wrote {} PNGs to {}\n", manifest.sample_count(), a.out);
        return 0;
    }
    if (!a.index) throw UsageError("render --dataset needs --index or --all");
    if (*a.index >= manifest.sample_count()) {
        throw UsageError(fmt::format("index {} out of range ({} samples)", *a.index, manifest.sample_count()));
    }
    dataset::export_png(dataset::load_sample(a.dataset, manifest, *a.index), a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-tone spectroscopy of a qubit coupled to a two-level system"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Read options from an INI file such as a persisted run_config.ini");

    GenerateArgs gen;
    EstimateArgs est;
    EvaluateArgs ev;
    RenderArgs ren;
    add_generate(app, gen);
    add_estimate(app, est);
    add_evaluate(app, ev);
    add_render(app, ren);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (app.got_subcommand("generate")) return run_generate(app, gen);
        if (app.got_subcommand("estimate")) return run_estimate(app, est);
        if (app.got_subcommand("evaluate")) return run_evaluate(ev);
        if (app.got_subcommand("render")) return run_render(ren);
    } catch (const UsageError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 2;
}
