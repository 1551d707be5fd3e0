#include "tlsspec/dataset.hpp"

#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "tlsspec/map_io.hpp"
#include "tlsspec/parallel.hpp"

namespace tlsspec::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

quantum::SystemParams sample_params(Rng& rng, const ParameterRanges& r, double amplitude) {
    quantum::SystemParams p;
    p.nu_q = r.nu_q;
    p.nu_tls = rng.uniform(r.nu_tls.lo, r.nu_tls.hi);
    p.U = rng.uniform(r.U.lo, r.U.hi);
    p.g = rng.uniform(r.g.lo, r.g.hi);
    p.T1_q = rng.uniform(r.T1_q.lo, r.T1_q.hi);
    p.Tphi_q = rng.uniform(r.Tphi_q.lo, r.Tphi_q.hi);
    p.T1_tls = rng.uniform(r.T1_tls.lo, r.T1_tls.hi);
    p.Tphi_tls = rng.uniform(r.Tphi_tls.lo, r.Tphi_tls.hi);
    p.A = amplitude;
    return p;
}

std::string to_string(NoiseMode mode) { return mode == NoiseMode::kClean ? "clean" : "noisy"; }

NoiseMode parse_noise_mode(const std::string& text) {
    if (text == "clean") return NoiseMode::kClean;
    if (text == "noisy") return NoiseMode::kNoisy;
    throw std::invalid_argument(fmt::format("unknown noise mode '{}' (clean|noisy)", text));
}

quantum::SystemParams SampleLabel::params() const {
    quantum::SystemParams p;
    p.nu_q = nu_q;
    p.nu_tls = nu_tls;
    p.U = U;
    p.g = g;
    p.T1_q = T1_q;
    p.Tphi_q = Tphi_q;
    p.T1_tls = T1_tls;
    p.Tphi_tls = Tphi_tls;
    p.A = A;
    return p;
}

SampleLabel SampleLabel::from_params(const quantum::SystemParams& p) {
    SampleLabel l;
    l.nu_tls = p.nu_tls;
    l.g = p.g;
    l.T1_tls = p.T1_tls;
    l.Tphi_tls = p.Tphi_tls;
    l.nu_q = p.nu_q;
    l.U = p.U;
    l.T1_q = p.T1_q;
    l.Tphi_q = p.Tphi_q;
    l.A = p.A;
    return l;
}

// ---- JSON -------------------------------------------------------------------------------

void to_json(json& j, const SampleLabel& l) {
    j = json{{"q", {{"nu_tls", l.nu_tls}, {"g", l.g}, {"T1_tls", l.T1_tls}, {"Tphi_tls", l.Tphi_tls}}},
             {"nuisance",
              {{"nu_q", l.nu_q}, {"U", l.U}, {"T1_q", l.T1_q}, {"Tphi_q", l.Tphi_q}, {"A", l.A}}},
             {"noise_width", l.noise_width},
             {"seed", l.seed}};
}

void from_json(const json& j, SampleLabel& l) {
    const json& q = j.at("q");
    const json& n = j.at("nuisance");
    q.at("nu_tls").get_to(l.nu_tls);
    q.at("g").get_to(l.g);
    q.at("T1_tls").get_to(l.T1_tls);
    q.at("Tphi_tls").get_to(l.Tphi_tls);
    n.at("nu_q").get_to(l.nu_q);
    n.at("U").get_to(l.U);
    n.at("T1_q").get_to(l.T1_q);
    n.at("Tphi_q").get_to(l.Tphi_q);
    n.at("A").get_to(l.A);
    j.at("noise_width").get_to(l.noise_width);
    j.at("seed").get_to(l.seed);
}

namespace {

json grid_json(const spectro::UniformGrid& g) { return {{"lo", g.lo}, {"hi", g.hi}, {"n", g.n}}; }

spectro::UniformGrid grid_from(const json& j) {
    return {j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("n").get<int>()};
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
Range range_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string integrator_name(quantum::Integrator m) {
    return m == quantum::Integrator::kPropagator ? "propagator" : "dormand-prince";
}

quantum::Integrator integrator_from(const std::string& s) {
    if (s == "propagator") return quantum::Integrator::kPropagator;
    if (s == "dormand-prince") return quantum::Integrator::kDormandPrince;
    throw std::runtime_error(fmt::format("manifest: unknown integrator '{}'", s));
}

}  // namespace

json manifest_to_json(const DatasetManifest& m) {
    const auto& pc = m.protocol;
    const auto& r = m.ranges;
    json samples = json::array();
    for (const auto& rec : m.records) {
        samples.push_back({{"index", rec.index},
                           {"file", rec.file},
                           {"sha256", rec.sha256},
                           {"attempts", rec.attempts},
                           {"label", rec.label}});
    }
    return json{
        {"format_version", m.format_version},
        {"sample_count", m.records.size()},
        {"global_seed", m.global_seed},
        {"noise_mode", to_string(m.noise_mode)},
        {"noise_width_range", range_json(kNoiseWidthRange)},
        {"protocol",
         {{"omega", grid_json(pc.omega)},
          {"time", grid_json(pc.time)},
          {"amplitude", pc.amplitude},
          {"t_pi", pc.t_pi()},
          {"integrator", integrator_name(pc.evolve.method)},
          {"rel_tol", pc.evolve.rel_tol},
          {"abs_tol", pc.evolve.abs_tol}}},
        {"parameter_ranges",
         {{"nu_q", r.nu_q},
          {"nu_tls", range_json(r.nu_tls)},
          {"U", range_json(r.U)},
          {"g", range_json(r.g)},
          {"T1_q", range_json(r.T1_q)},
          {"Tphi_q", range_json(r.Tphi_q)},
          {"T1_tls", range_json(r.T1_tls)},
          {"Tphi_tls", range_json(r.Tphi_tls)}}},
        {"axes", {{"omega", pc.omega.points()}, {"time", pc.time.points()}}},
        {"map_format",
         {{"magic", "TLSM"},
          {"dtype", "float32"},
          {"byte_order", "little"},
          {"layout", "row-major"},
          {"rows", "time"},
          {"cols", "omega"}}},
        {"samples", samples},
    };
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        if (m.format_version != kFormatVersion) {
            throw std::runtime_error(
                fmt::format("unsupported manifest format_version {}", m.format_version));
        }
        m.global_seed = j.at("global_seed").get<std::uint64_t>();
        m.noise_mode = parse_noise_mode(j.at("noise_mode").get<std::string>());
        const json& pc = j.at("protocol");
        m.protocol.omega = grid_from(pc.at("omega"));
        m.protocol.time = grid_from(pc.at("time"));
        m.protocol.amplitude = pc.at("amplitude").get<double>();
        m.protocol.evolve.method = integrator_from(pc.at("integrator").get<std::string>());
        m.protocol.evolve.rel_tol = pc.at("rel_tol").get<double>();
        m.protocol.evolve.abs_tol = pc.at("abs_tol").get<double>();
        const json& r = j.at("parameter_ranges");
        m.ranges.nu_q = r.at("nu_q").get<double>();
        m.ranges.nu_tls = range_from(r.at("nu_tls"));
        m.ranges.U = range_from(r.at("U"));
        m.ranges.g = range_from(r.at("g"));
        m.ranges.T1_q = range_from(r.at("T1_q"));
        m.ranges.Tphi_q = range_from(r.at("Tphi_q"));
        m.ranges.T1_tls = range_from(r.at("T1_tls"));
        m.ranges.Tphi_tls = range_from(r.at("Tphi_tls"));

        std::set<std::string> names;
        for (const json& s : j.at("samples")) {
            SampleRecord rec;
            rec.index = s.at("index").get<std::size_t>();
            rec.file = s.at("file").get<std::string>();
            rec.sha256 = s.at("sha256").get<std::string>();
            rec.attempts = s.at("attempts").get<int>();
            rec.label = s.at("label").get<SampleLabel>();
            if (!names.insert(rec.file).second) {
                throw std::runtime_error(fmt::format("duplicate sample file '{}'", rec.file));
            }
            m.records.push_back(std::move(rec));
        }
        const auto count = j.at("sample_count").get<std::size_t>();
        if (count != m.records.size()) {
            throw std::runtime_error(fmt::format("sample_count {} but {} sample records", count,
                                                 m.records.size()));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(fmt::format("manifest schema error: {}", e.what()));
    }
    return m;
}

fs::path manifest_path(const fs::path& dir) { return dir / "manifest.json"; }

DatasetManifest read_manifest(const fs::path& dir) {
    const fs::path path = manifest_path(dir);
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("missing manifest {}", path.string()));
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
    }
    return manifest_from_json(j);
}

void write_manifest(const fs::path& dir, const DatasetManifest& manifest) {
    const std::string text = manifest_to_json(manifest).dump(2) + "\n";
    io::write_file_atomic(manifest_path(dir),
                          {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string sample_file_name(std::size_t index) { return fmt::format("sample_{:06d}", index); }

// ---- Sampling and generation ---------------------------------------------------------------

std::uint64_t derive_sample_seed(std::uint64_t global_seed, std::size_t index) {
    return Rng::derive(global_seed, index, 0).next_u64();
}

SampleStreams::SampleStreams(std::uint64_t sample_seed, NoiseMode mode)
    : params_rng_(Rng::derive(sample_seed, 0, 1)) {
    if (mode == NoiseMode::kNoisy) {
        Rng noise_rng = Rng::derive(sample_seed, 0, 2);
        noise_width_ = noise_rng.uniform(kNoiseWidthRange.lo, kNoiseWidthRange.hi);
        noise_seed_ = noise_rng.next_u64();
    }
}

quantum::SystemParams SampleStreams::next_params(const ParameterRanges& ranges, double amplitude) {
    return sample_params(params_rng_, ranges, amplitude);
}

SampleDraw draw_sample(std::uint64_t global_seed, std::size_t index, NoiseMode mode,
                       const ParameterRanges& ranges, double amplitude) {
    SampleDraw d;
    d.sample_seed = derive_sample_seed(global_seed, index);
    SampleStreams streams(d.sample_seed, mode);
    d.params = streams.next_params(ranges, amplitude);
    d.noise_width = streams.noise_width();
    d.noise_seed = streams.noise_seed();
    return d;
}

GeneratedSample generate_sample(std::uint64_t global_seed, std::size_t index, NoiseMode mode,
                                const spectro::ProtocolConfig& protocol,
                                const ParameterRanges& ranges, const LogFn& log) {
    const std::uint64_t sample_seed = derive_sample_seed(global_seed, index);
    SampleStreams streams(sample_seed, mode);
    for (int attempt = 1; attempt <= kMaxAttempts; ++attempt) {
        const quantum::SystemParams params = streams.next_params(ranges, protocol.amplitude);
        try {
            GeneratedSample out;
            out.map = spectro::run_protocol(params, protocol);
            out.map = spectro::add_noise(out.map, streams.noise_width(), streams.noise_seed());
            out.label = SampleLabel::from_params(params);
            out.label.noise_width = streams.noise_width();
            out.label.seed = sample_seed;
            out.attempts = attempt;
            return out;
        } catch (const quantum::IntegrationError& e) {
            if (log) {
                log(fmt::format("sample {}: attempt {} failed ({}); redrawing parameters", index,
                                attempt, e.what()));
            }
        }
    }
    throw std::runtime_error(
        fmt::format("sample {}: integration failed for {} parameter draws", index, kMaxAttempts));
}

DatasetManifest generate_dataset(const fs::path& out_dir, const GenerateOptions& options) {
    if (options.count < 1) throw std::invalid_argument("sample count must be >= 1");
    options.protocol.validate();
    if (fs::exists(manifest_path(out_dir))) {
        throw std::runtime_error(fmt::format(
            "{} already holds a dataset; refusing to modify it", out_dir.string()));
    }
    fs::create_directories(out_dir / "samples");
    if (options.write_png) fs::create_directories(out_dir / "png");

    DatasetManifest manifest;
    manifest.global_seed = options.seed;
    manifest.noise_mode = options.noise_mode;
    manifest.protocol = options.protocol;
    manifest.ranges = options.ranges;
    manifest.records.resize(options.count);

    std::mutex log_mutex;
    const LogFn log = [&](const std::string& msg) {
        std::lock_guard lock(log_mutex);
        if (options.log) {
            options.log(msg);
        } else {
            std::cerr << msg << '\n';
        }
    };

    parallel_for(options.count, options.parallelism, [&](std::size_t i) {
        GeneratedSample s =
            generate_sample(options.seed, i, options.noise_mode, options.protocol, options.ranges, log);
        const std::string stem = sample_file_name(i);
        const std::vector<std::uint8_t> bytes = io::encode_tlsm(s.map.P);
        io::write_file_atomic(out_dir / "samples" / (stem + ".tlsm"), bytes);
        if (options.write_png) export_png(s.map, out_dir / "png" / (stem + ".png"));
        SampleRecord& rec = manifest.records[i];
        rec.index = i;
        rec.file = "samples/" + stem + ".tlsm";
        rec.sha256 = io::sha256_hex(bytes);
        rec.attempts = s.attempts;
        rec.label = s.label;
    });

    write_manifest(out_dir, manifest);
    return manifest;
}

spectro::SpectroscopyMap load_sample(const fs::path& dir, const DatasetManifest& manifest,
                                     std::size_t index) {
    if (index >= manifest.records.size()) {
        throw std::out_of_range(fmt::format("sample index {} out of range", index));
    }
    spectro::SpectroscopyMap map;
    map.P = io::read_tlsm(dir / manifest.records[index].file);
    map.omega_axis = manifest.omega_axis();
    map.time_axis = manifest.time_axis();
    map.validate_shape();
    return map;
}

}  // namespace tlsspec::dataset
