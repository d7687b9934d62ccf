#pragma once

#include <span>
#include <string>
#include <vector>

#include "grade/model.hpp"

namespace grade {

// Shannon entropy of the distribution divided by log2 of the full support
// cardinality (not the number of observed values). Zero-probability values
// contribute nothing; a single-value support scores 0.
GradeScore normalized_entropy(const ValueDistribution& dist, std::size_t support_cardinality);

struct ScoreAggregate {
    double mean = 0.0;
    double standard_error = 0.0;  // sample std / sqrt(k); 0 for a single score
    std::size_t count = 0;
};

ScoreAggregate aggregate_scores(std::span<const double> values);

struct ModelScoreFragment {
    ScoreAggregate multi;
    ScoreAggregate single;
};

// Mean and standard error per scope over a model's GRADE scores.
ModelScoreFragment model_score(std::span<const GradeScore> scores);

struct ConceptDistribution {
    std::string concept_id;
    ValueDistribution dist;
};

struct DefaultBehaviorSummary {
    std::vector<DefaultBehavior> behaviors;
    DefaultBehaviorStats stats;
};

// Flags every distribution whose dominant value reaches frequency >= tau
// (inclusive). pct_at_least_one is computed per concept over its
// distributions; pct_total over all distributions passed in.
DefaultBehaviorSummary detect_default_behaviors(std::span<const ConceptDistribution> items,
                                                double tau = 0.8);

// Fraction of answers mapped to the sentinel.
double nota_rate(std::span<const AnswerRecord> answers);

// Total variation distance, 0.5 * L1 over the union of value names with
// missing values treated as 0.
double total_variation(const ValueDistribution& p, const ValueDistribution& q);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace grade
