#include "grade/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "grade/errors.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

namespace {

void dump_fixed4_into(const json& j, int indent, int depth, std::string& out) {
    const std::string pad(static_cast<std::size_t>(indent) * (depth + 1), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent) * depth, ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            std::size_t i = 0;
            for (const auto& [key, value] : j.items()) {
                out += pad + json(key).dump() + ": ";
                dump_fixed4_into(value, indent, depth + 1, out);
                if (++i < j.size()) out += ",";
                out += "\n";
            }
            out += close_pad + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                out += pad;
                dump_fixed4_into(j[i], indent, depth + 1, out);
                if (i + 1 < j.size()) out += ",";
                out += "\n";
            }
            out += close_pad + "]";
            return;
        }
        case json::value_t::number_float:
            out += format_fixed4(j.get<double>());
            return;
        default:
            out += j.dump();
            return;
    }
}

}  // namespace

std::string dump_json_fixed4(const json& j, int indent) {
    std::string out;
    dump_fixed4_into(j, indent, 0, out);
    out += "\n";
    return out;
}

void emit_report_json(std::span<const ModelReport> reports, const json& config,
                      const fs::path& path) {
    std::vector<const ModelReport*> ordered;
    ordered.reserve(reports.size());
    for (const ModelReport& r : reports) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const ModelReport* a, const ModelReport* b) { return a->model_id < b->model_id; });

    json doc;
    doc["config"] = config;
    doc["models"] = json::array();
    for (const ModelReport* r : ordered) doc["models"].push_back(report_to_json(*r));
    write_file_atomic(path, dump_json_fixed4(doc));
}

void emit_report_csv(std::span<const ModelReport> reports, const json& config,
                     const fs::path& path) {
    std::vector<const ModelReport*> ordered;
    ordered.reserve(reports.size());
    for (const ModelReport& r : reports) ordered.push_back(&r);
    std::sort(ordered.begin(), ordered.end(),
              [](const ModelReport* a, const ModelReport* b) { return a->model_id < b->model_id; });

    std::ostringstream out;
    out << "model,multi_mean,multi_se,single_mean,single_se\n";
    std::size_t excluded_models = 0;
    std::size_t excluded_invalid = 0;
    for (const ModelReport* r : ordered) {
        excluded_invalid += r->n_excluded_invalid;
        if (r->per_distribution_scores.empty()) {
            ++excluded_models;
            continue;
        }
        out << r->model_id << "," << format_fixed4(r->mean_multi) << ","
            << format_fixed4(r->standard_error_multi) << "," << format_fixed4(r->mean_single)
            << "," << format_fixed4(r->standard_error_single) << "\n";
    }
    if (excluded_invalid > 0) out << "# excluded_invalid_distributions," << excluded_invalid << "\n";
    if (excluded_models > 0) out << "# excluded_models," << excluded_models << "\n";
    out << "# config," << config.dump() << "\n";
    write_file_atomic(path, out.str());
}

namespace {

// XML comments cannot contain "--".
std::string comment_safe(std::string s) {
    std::size_t pos = 0;
    while ((pos = s.find("--", pos)) != std::string::npos) s.replace(pos, 2, "- -");
    return s;
}

}  // namespace

void emit_histogram_svg(std::span<const double> scores, const std::string& title,
                        const json& config, const fs::path& path, int bins) {
    if (scores.empty()) throw ValidationError("histogram needs at least one score");
    if (bins <= 0) throw ValidationError("histogram needs at least one bin");

    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double s : scores) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw ValidationError("score outside [0,1]: " + format_fixed4(s));
        }
        auto bin = static_cast<std::size_t>(s * bins);
        if (bin >= counts.size()) bin = counts.size() - 1;  // s == 1.0 lands in the last bin
        ++counts[bin];
    }
    const std::size_t max_count = *std::max_element(counts.begin(), counts.end());

    const double width = 640.0, height = 400.0;
    const double left = 50.0, right = 20.0, top = 40.0, bottom = 40.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const double bar_w = plot_w / bins;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_compact(width)
        << "\" height=\"" << format_compact(height) << "\" viewBox=\"0 0 "
        << format_compact(width) << " " << format_compact(height) << "\">\n";
    out << "<!-- config: " << comment_safe(config.dump()) << " -->\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "  <text x=\"" << format_compact(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
    for (int b = 0; b < bins; ++b) {
        const std::size_t count = counts[static_cast<std::size_t>(b)];
        const double h = max_count == 0
                             ? 0.0
                             : plot_h * static_cast<double>(count) / static_cast<double>(max_count);
        const double x = left + b * bar_w;
        const double y = top + plot_h - h;
        out << "  <rect x=\"" << format_compact(x) << "\" y=\"" << format_compact(y)
            << "\" width=\"" << format_compact(bar_w) << "\" height=\"" << format_compact(h)
            << "\" fill=\"#4878a8\" stroke=\"white\" stroke-width=\"1\"/>\n";
    }
    // axes
    out << "  <line x1=\"" << format_compact(left) << "\" y1=\"" << format_compact(top + plot_h)
        << "\" x2=\"" << format_compact(left + plot_w) << "\" y2=\""
        << format_compact(top + plot_h) << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << format_compact(left) << "\" y1=\"" << format_compact(top)
        << "\" x2=\"" << format_compact(left) << "\" y2=\"" << format_compact(top + plot_h)
        << "\" stroke=\"black\"/>\n";
    for (double tick : {0.0, 0.5, 1.0}) {
        const double x = left + tick * plot_w;
        out << "  <text x=\"" << format_compact(x) << "\" y=\""
            << format_compact(top + plot_h + 20) << "\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"12\">" << format_compact(tick)
            << "</text>\n";
    }
    out << "  <text x=\"" << format_compact(left - 8) << "\" y=\"" << format_compact(top + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << max_count
        << "</text>\n";
    out << "  <text x=\"" << format_compact(left - 8) << "\" y=\""
        << format_compact(top + plot_h + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">0</text>\n";
    out << "</svg>\n";
    write_file_atomic(path, out.str());
}

std::pair<std::string, std::string> pair_key(const std::string& a, const std::string& b) {
    return a <= b ? std::make_pair(a, b) : std::make_pair(b, a);
}

namespace {

std::string format_g6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

void emit_pairwise_matrix(const std::vector<std::string>& models,
                          const std::map<std::pair<std::string, std::string>, double>& values,
                          MatrixKind kind, const json& config, const fs::path& json_path,
                          const fs::path& csv_path) {
    if (models.size() < 2) throw ValidationError("pairwise matrix needs at least two models");
    {
        std::vector<std::string> sorted(models);
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
            throw ValidationError("duplicate model in matrix model list");
        }
    }

    const double diagonal = kind == MatrixKind::tvd ? 0.0 : 1.0;
    const std::size_t n = models.size();
    std::vector<std::vector<double>> matrix(n, std::vector<double>(n, diagonal));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto it = values.find(pair_key(models[i], models[j]));
            if (it == values.end()) {
                throw ValidationError("missing pair result: " + models[i] + " vs " + models[j]);
            }
            if (!(it->second >= 0.0 && it->second <= 1.0)) {
                throw ValidationError("pair value outside [0,1] for " + models[i] + " vs " +
                                      models[j]);
            }
            matrix[i][j] = matrix[j][i] = it->second;
        }
    }

    json doc;
    doc["kind"] = kind == MatrixKind::tvd ? "tvd" : "p_value";
    doc["models"] = models;
    doc["matrix"] = matrix;
    doc["config"] = config;
    write_file_atomic(json_path, doc.dump(2) + "\n");

    std::ostringstream csv;
    csv << "model";
    for (const std::string& m : models) csv << "," << m;
    csv << "\n";
    for (std::size_t i = 0; i < n; ++i) {
        csv << models[i];
        for (std::size_t j = 0; j < n; ++j) {
            // App-style rendering: TVD percent in 0..100, p-values as-is.
            if (kind == MatrixKind::tvd) {
                csv << "," << format_compact(matrix[i][j] * 100.0);
            } else {
                csv << "," << format_g6(matrix[i][j]);
            }
        }
        csv << "\n";
    }
    csv << "# config," << config.dump() << "\n";
    write_file_atomic(csv_path, csv.str());
}

}  // namespace grade
