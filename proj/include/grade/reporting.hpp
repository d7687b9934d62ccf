#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "grade/model.hpp"

namespace grade {

// JSON text with floats at fixed 4 decimals and keys in sorted order, so
// emissions are byte-stable. Integers pass through unchanged.
std::string dump_json_fixed4(const nlohmann::json& j, int indent = 2);

// report.json: {"config": ..., "models": [...]} sorted by model_id.
void emit_report_json(std::span<const ModelReport> reports, const nlohmann::json& config,
                      const std::filesystem::path& path);

// report.csv: one row per model with columns
//   model,multi_mean,multi_se,single_mean,single_se
// Models with no valid distributions are dropped from the table; footer
// comment lines carry the exclusion counts and the resolved config.
void emit_report_csv(std::span<const ModelReport> reports, const nlohmann::json& config,
                     const std::filesystem::path& path);

// Standalone SVG histogram of scores, `bins` uniform bins over [0, 1].
void emit_histogram_svg(std::span<const double> scores, const std::string& title,
                        const nlohmann::json& config, const std::filesystem::path& path,
                        int bins = 20);

enum class MatrixKind { tvd, p_value };

// Canonical unordered-pair key: the two names in sorted order.
std::pair<std::string, std::string> pair_key(const std::string& a, const std::string& b);

// Symmetric pairwise matrix over models. Values live in [0,1]; the JSON keeps
// them as-is, the CSV renders TVD entries ×100 (p-values unscaled). Diagonal
// is 0 for TVD and 1 for p-values. Throws when a pair is missing, naming it.
void emit_pairwise_matrix(const std::vector<std::string>& models,
                          const std::map<std::pair<std::string, std::string>, double>& values,
                          MatrixKind kind, const nlohmann::json& config,
                          const std::filesystem::path& json_path,
                          const std::filesystem::path& csv_path);

}  // namespace grade
