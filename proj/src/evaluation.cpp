#include "tlsspec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <span>

#include <fmt/format.h>

#include "tlsspec/map_io.hpp"

namespace tlsspec::eval {

namespace {

std::vector<std::string> split(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

double parse_number(const std::string& text, const std::filesystem::path& path, std::size_t line) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || end != text.c_str() + text.size()) {
        throw SchemaError(fmt::format("{}:{}: '{}' is not a number", path.string(), line, text));
    }
    return v;
}

std::size_t parse_index(const std::string& text, const std::filesystem::path& path, std::size_t line) {
    std::size_t consumed = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &consumed);
    } catch (const std::exception&) {
        consumed = 0;
    }
    if (text.empty() || consumed != text.size() || text.front() == '-') {
        throw SchemaError(fmt::format("{}:{}: '{}' is not a sample index", path.string(), line, text));
    }
    return static_cast<std::size_t>(v);
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

void write_text(const std::filesystem::path& path, const std::string& text) {
    io::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    return lines;
}

}  // namespace

void Bounds::validate() const {
    for (std::size_t k = 0; k < kParams; ++k) {
        if (!std::isfinite(min[k]) || !std::isfinite(max[k]) || !(max[k] > min[k])) {
            throw DegenerateColumn(fmt::format("bounds for {} are degenerate: [{}, {}]",
                                               kParameterNames[k], min[k], max[k]));
        }
    }
}

Bounds compute_bounds(const std::vector<Label>& Q) {
    if (Q.empty()) throw DegenerateColumn("cannot compute bounds of an empty label set");
    Bounds b{Q.front(), Q.front()};
    for (const Label& q : Q) {
        for (std::size_t k = 0; k < kParams; ++k) {
            b.min[k] = std::min(b.min[k], q[k]);
            b.max[k] = std::max(b.max[k], q[k]);
        }
    }
    b.validate();
    return b;
}

double normalize_value(double q, std::size_t component, const Bounds& bounds) {
    return 1.0 + 9.0 * (q - bounds.min[component]) / (bounds.max[component] - bounds.min[component]);
}

double denormalize_value(double q_norm, std::size_t component, const Bounds& bounds) {
    return bounds.min[component] + (q_norm - 1.0) / 9.0 * (bounds.max[component] - bounds.min[component]);
}

NormalizedLabels normalize_labels(const std::vector<Label>& Q, const std::optional<Bounds>& bounds) {
    NormalizedLabels out;
    out.bounds = bounds ? *bounds : compute_bounds(Q);
    out.bounds.validate();
    out.values.reserve(Q.size());
    for (const Label& q : Q) {
        Label n{};
        for (std::size_t k = 0; k < kParams; ++k) n[k] = normalize_value(q[k], k, out.bounds);
        out.values.push_back(n);
    }
    return out;
}

std::vector<Label> denormalize_labels(const std::vector<Label>& Q_norm, const Bounds& bounds) {
    bounds.validate();
    std::vector<Label> out;
    out.reserve(Q_norm.size());
    for (const Label& q : Q_norm) {
        Label r{};
        for (std::size_t k = 0; k < kParams; ++k) r[k] = denormalize_value(q[k], k, bounds);
        out.push_back(r);
    }
    return out;
}

std::array<bool, kParams> PredictionTable::present() const {
    std::array<bool, kParams> out{};
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < kParams; ++k) out[k] = out[k] || row.q[k].has_value();
    }
    return out;
}

void write_predictions_csv(const std::filesystem::path& path, const PredictionTable& table) {
    std::string text;
    if (table.bounds) {
        for (std::size_t k = 0; k < kParams; ++k) {
            text += fmt::format("# bounds,{},{},{}\n", kParameterNames[k], num(table.bounds->min[k]),
                                num(table.bounds->max[k]));
        }
    }
    text += "index,source,nu_tls,g,T1_tls,Tphi_tls\n";
    for (const auto& row : table.rows) {
        text += fmt::format("{},{}", row.index, row.source);
        for (const auto& v : row.q) text += "," + (v ? num(*v) : std::string());
        text += '\n';
    }
    write_text(path, text);
}

PredictionTable read_predictions_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    PredictionTable table;
    Bounds bounds;
    std::array<bool, kParams> have_bound{};
    bool header_seen = false;
    std::array<int, kParams> column{-1, -1, -1, -1};
    int index_col = -1;
    int source_col = -1;

    for (std::size_t n = 0; n < lines.size(); ++n) {
        const std::string& line = lines[n];
        const std::size_t lineno = n + 1;
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto f = split(line);
            if (f.size() == 4 && f[0] == "# bounds") {
                const auto it = std::find_if(kParameterNames.begin(), kParameterNames.end(),
                                             [&](const char* name) { return f[1] == name; });
                if (it == kParameterNames.end()) {
                    throw SchemaError(fmt::format("{}:{}: unknown parameter '{}'", path.string(), lineno, f[1]));
                }
                const auto k = static_cast<std::size_t>(it - kParameterNames.begin());
                bounds.min[k] = parse_number(f[2], path, lineno);
                bounds.max[k] = parse_number(f[3], path, lineno);
                have_bound[k] = true;
            }
            continue;
        }
        const auto fields = split(line);
        if (!header_seen) {
            header_seen = true;
            for (std::size_t c = 0; c < fields.size(); ++c) {
                if (fields[c] == "index") index_col = static_cast<int>(c);
                if (fields[c] == "source") source_col = static_cast<int>(c);
                for (std::size_t k = 0; k < kParams; ++k) {
                    if (fields[c] == kParameterNames[k]) column[k] = static_cast<int>(c);
                }
            }
            if (index_col < 0) throw SchemaError(fmt::format("{}: header has no 'index' column", path.string()));
            if (std::all_of(column.begin(), column.end(), [](int c) { return c < 0; })) {
                throw SchemaError(fmt::format("{}: header names none of nu_tls, g, T1_tls, Tphi_tls", path.string()));
            }
            continue;
        }
        const auto need = [&](int c) {
            if (c >= static_cast<int>(fields.size())) {
                throw SchemaError(fmt::format("{}:{}: expected at least {} fields, got {}", path.string(),
                                              lineno, c + 1, fields.size()));
            }
            return fields[static_cast<std::size_t>(c)];
        };
        PredictionRow row;
        row.index = parse_index(need(index_col), path, lineno);
        row.source = source_col >= 0 ? need(source_col) : "cnn";
        for (std::size_t k = 0; k < kParams; ++k) {
            if (column[k] < 0) continue;
            const std::string cell = need(column[k]);
            if (!cell.empty()) row.q[k] = parse_number(cell, path, lineno);
        }
        table.rows.push_back(std::move(row));
    }
    if (!header_seen) throw SchemaError(fmt::format("{}: missing header", path.string()));
    if (std::any_of(have_bound.begin(), have_bound.end(), [](bool b) { return b; })) {
        if (!std::all_of(have_bound.begin(), have_bound.end(), [](bool b) { return b; })) {
            throw SchemaError(fmt::format("{}: bounds given for only some parameters", path.string()));
        }
        bounds.validate();
        table.bounds = bounds;
    }
    return table;
}

std::string to_string(Scale scale) { return scale == Scale::kRaw ? "raw" : "normalized"; }

MseResult mse(const PredictionTable& pred, const std::vector<Label>& labels, Scale scale,
              const std::optional<Bounds>& bounds) {
    if (pred.rows.empty()) throw IndexMismatch("prediction table is empty");
    if (scale == Scale::kNormalized) {
        if (!bounds) throw std::invalid_argument("normalized MSE needs bounds");
        bounds->validate();
    }
    std::vector<bool> seen(labels.size(), false);
    std::array<double, kParams> sum{};
    std::array<std::size_t, kParams> count{};
    for (const auto& row : pred.rows) {
        if (row.index >= labels.size()) {
            throw IndexMismatch(fmt::format("prediction for sample {} but only {} labels", row.index, labels.size()));
        }
        if (seen[row.index]) throw IndexMismatch(fmt::format("duplicate prediction for sample {}", row.index));
        seen[row.index] = true;
        for (std::size_t k = 0; k < kParams; ++k) {
            if (!row.q[k]) continue;
            double p = *row.q[k];
            double t = labels[row.index][k];
            if (scale == Scale::kNormalized) {
                p = normalize_value(p, k, *bounds);
                t = normalize_value(t, k, *bounds);
            }
            sum[k] += (p - t) * (p - t);
            ++count[k];
        }
    }
    MseResult out;
    out.samples = pred.rows.size();
    double total = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < kParams; ++k) {
        if (count[k] == 0) continue;
        out.per_parameter[k] = sum[k] / static_cast<double>(count[k]);
        total += *out.per_parameter[k];
        ++present;
    }
    out.combined = present > 0 ? total / static_cast<double>(present) : 0.0;
    return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) return 0.0;
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    if (!(p >= 0.0 && p <= 100.0)) throw std::invalid_argument("percentile must be in [0, 100]");
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

DetuningReport error_vs_detuning(const std::vector<DetuningSample>& samples, std::size_t bin_count) {
    if (bin_count < 2) throw std::invalid_argument("error_vs_detuning needs at least 2 bins");
    if (samples.size() < 2) throw std::invalid_argument("error_vs_detuning needs at least 2 samples");
    const auto [lo_it, hi_it] = std::minmax_element(
        samples.begin(), samples.end(),
        [](const DetuningSample& a, const DetuningSample& b) { return a.abs_detuning < b.abs_detuning; });
    const double lo = lo_it->abs_detuning;
    const double hi = hi_it->abs_detuning;
    const double width = (hi - lo) / static_cast<double>(bin_count);

    std::vector<std::vector<const DetuningSample*>> members(bin_count);
    for (const auto& s : samples) {
        std::size_t b = width > 0.0 ? static_cast<std::size_t>((s.abs_detuning - lo) / width) : 0;
        members[std::min(b, bin_count - 1)].push_back(&s);
    }

    DetuningReport report;
    for (std::size_t b = 0; b < bin_count; ++b) {
        if (members[b].empty()) continue;
        std::vector<double> nu;
        std::vector<double> g;
        for (const auto* s : members[b]) {
            nu.push_back(s->nu_error);
            g.push_back(s->g_error);
        }
        report.bins.push_back({lo + width * static_cast<double>(b), lo + width * static_cast<double>(b + 1),
                               members[b].size(), percentile(nu, 50.0), percentile(nu, 90.0),
                               percentile(g, 50.0), percentile(g, 90.0)});
    }
    if (report.bins.size() < 2) {
        throw std::invalid_argument("error_vs_detuning: fewer than 2 populated bins");
    }

    std::vector<double> d;
    std::vector<double> nu;
    std::vector<double> g;
    for (const auto& s : samples) {
        d.push_back(s.abs_detuning);
        nu.push_back(s.nu_error);
        g.push_back(s.g_error);
    }
    report.spearman_nu = spearman(d, nu);
    report.spearman_g = spearman(d, g);
    return report;
}

void scatter_export(const PredictionTable& pred, const std::vector<Label>& labels,
                    const std::filesystem::path& path, Scale scale, const std::optional<Bounds>& bounds) {
    if (scale == Scale::kNormalized) {
        if (!bounds) throw std::invalid_argument("normalized scatter export needs bounds");
        bounds->validate();
    }
    std::string text = "index,parameter,target,prediction,scale\n";
    for (const auto& row : pred.rows) {
        if (row.index >= labels.size()) {
            throw IndexMismatch(fmt::format("prediction for sample {} but only {} labels", row.index, labels.size()));
        }
        for (std::size_t k = 0; k < kParams; ++k) {
            if (!row.q[k]) continue;
            double t = labels[row.index][k];
            double p = *row.q[k];
            if (scale == Scale::kNormalized) {
                t = normalize_value(t, k, *bounds);
                p = normalize_value(p, k, *bounds);
            }
            text += fmt::format("{},{},{},{},{}\n", row.index, kParameterNames[k], num(t), num(p), to_string(scale));
        }
    }
    write_text(path, text);
}

std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines.front() != "index,parameter,target,prediction,scale") {
        throw SchemaError(fmt::format("{}: not a scatter export", path.string()));
    }
    std::vector<ScatterRow> rows;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (lines[n].empty()) continue;
        const auto f = split(lines[n]);
        if (f.size() != 5) throw SchemaError(fmt::format("{}:{}: expected 5 fields", path.string(), n + 1));
        rows.push_back({parse_index(f[0], path, n + 1), f[1], parse_number(f[2], path, n + 1),
                        parse_number(f[3], path, n + 1), f[4]});
    }
    return rows;
}

std::string format_report(const std::vector<ModelReport>& models) {
    std::string out = fmt::format("{:<10}", "parameter");
    for (const auto& m : models) {
        out += fmt::format(" {:>16} {:>16}", m.name + " raw", m.name + " norm");
    }
    out += '\n';
    const auto cell = [](const std::optional<double>& v) {
        return v ? fmt::format("{:>16.6g}", *v) : fmt::format("{:>16}", "absent");
    };
    for (std::size_t k = 0; k < kParams; ++k) {
        out += fmt::format("{:<10}", kParameterNames[k]);
        for (const auto& m : models) out += " " + cell(m.raw.per_parameter[k]) + " " + cell(m.normalized.per_parameter[k]);
        out += '\n';
    }
    out += fmt::format("{:<10}", "L");
    for (const auto& m : models) out += fmt::format(" {:>16.6g} {:>16.6g}", m.raw.combined, m.normalized.combined);
    out += '\n';
    out += fmt::format("{:<10}", "samples");
    for (const auto& m : models) out += fmt::format(" {:>16} {:>16}", m.raw.samples, m.normalized.samples);
    out += '\n';
    return out;
}

namespace {

constexpr const char* kEstimatesHeader =
    "index,valid,reject_reason,nu_tls_hat,g_hat,nu_q_dressed_obs,nu_tls_dressed_obs,"
    "detuning_dressed_obs,c1,c2,c3,c4,c5,residual_rms";

}  // namespace

void write_estimates_csv(const std::filesystem::path& path, const std::vector<EstimateRow>& rows) {
    std::string text = std::string(kEstimatesHeader) + "\n";
    for (const auto& [index, r] : rows) {
        text += fmt::format("{},{},{},{},{},{},{},{}", index, r.valid ? 1 : 0, estimator::to_string(r.reject_reason),
                            num(r.nu_tls_hat), num(r.g_hat), num(r.nu_q_dressed_obs),
                            num(r.nu_tls_dressed_obs), num(r.detuning_dressed_obs));
        for (double c : r.fit.c) text += "," + num(c);
        text += "," + num(r.fit.residual_rms) + "\n";
    }
    write_text(path, text);
}

std::vector<EstimateRow> read_estimates_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || split(lines.front()) != split(kEstimatesHeader)) {
        throw SchemaError(fmt::format("{}: not an estimates file", path.string()));
    }
    std::vector<EstimateRow> rows;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (lines[n].empty()) continue;
        const std::size_t lineno = n + 1;
        const auto f = split(lines[n]);
        if (f.size() != 14) throw SchemaError(fmt::format("{}:{}: expected 14 fields", path.string(), lineno));
        EstimateRow row;
        row.index = parse_index(f[0], path, lineno);
        if (f[1] != "0" && f[1] != "1") throw SchemaError(fmt::format("{}:{}: valid must be 0 or 1", path.string(), lineno));
        row.result.valid = f[1] == "1";
        try {
            row.result.reject_reason = estimator::parse_reject_reason(f[2]);
        } catch (const std::invalid_argument& e) {
            throw SchemaError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
        }
        row.result.nu_tls_hat = parse_number(f[3], path, lineno);
        row.result.g_hat = parse_number(f[4], path, lineno);
        row.result.nu_q_dressed_obs = parse_number(f[5], path, lineno);
        row.result.nu_tls_dressed_obs = parse_number(f[6], path, lineno);
        row.result.detuning_dressed_obs = parse_number(f[7], path, lineno);
        for (std::size_t k = 0; k < 5; ++k) row.result.fit.c[k] = parse_number(f[8 + k], path, lineno);
        row.result.fit.residual_rms = parse_number(f[13], path, lineno);
        row.result.fit.converged = row.result.reject_reason != estimator::RejectReason::kNotConverged;
        rows.push_back(row);
    }
    return rows;
}

PredictionTable estimates_to_predictions(const std::vector<EstimateRow>& rows) {
    PredictionTable table;
    for (const auto& [index, r] : rows) {
        if (!r.valid) continue;
        PredictionRow row;
        row.index = index;
        row.source = "analytic";
        row.q[0] = r.nu_tls_hat;
        row.q[1] = r.g_hat;
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace tlsspec::eval
