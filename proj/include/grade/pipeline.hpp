#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "grade/backends.hpp"
#include "grade/model.hpp"
#include "grade/stats.hpp"

namespace grade {

struct ScoreOutcome {
    // Schema order: for each question, its single-prompt distributions in
    // prompt order, then the multi-prompt one.
    std::vector<ValueDistribution> distributions;
    ModelReport report;
};

// Builds every distribution from raw answers against the schema, scores the
// valid ones, and assembles the model report (means, default behaviors,
// sentinel rate, exclusion count). model_id may be empty; it is then inferred
// from the answer image ids. Mixed models in one answer set are an error.
ScoreOutcome score_answers(const ConceptSchema& schema, std::span<const AnswerRecord> answers,
                           std::string model_id, double tau);

struct PairComparison {
    std::string model_a;
    std::string model_b;
    PermutationTestResult multi;
    PermutationTestResult single;
};

// Permutation tests between every pair of model reports, run over the
// per-distribution score vectors of each scope. Pair seeds derive from
// options.seed and the pair's model ids, so results are order-independent.
std::vector<PairComparison> compare_reports(std::span<const ModelReport> reports,
                                            const PermutationOptions& options);

nlohmann::json comparisons_to_json(std::span<const PairComparison> pairs,
                                   const nlohmann::json& config);

// Mean multi-prompt TVD per model pair over the questions both sides scored.
// Throws when a pair shares no valid question.
std::map<std::pair<std::string, std::string>, double> mean_tvd_pairs(
    const std::vector<std::string>& models,
    const std::vector<std::vector<ValueDistribution>>& dists_per_model);

struct DistributionsDoc {
    std::string model;
    std::vector<ValueDistribution> distributions;
};

void save_distributions_json(std::span<const ValueDistribution> dists, const std::string& model_id,
                             const nlohmann::json& config, const std::filesystem::path& path);
DistributionsDoc load_distributions_json(const std::filesystem::path& path);

}  // namespace grade
