#include "grade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "grade/errors.hpp"

namespace grade {

GradeScore normalized_entropy(const ValueDistribution& dist, std::size_t support_cardinality) {
    if (support_cardinality < 1) {
        throw ValidationError("normalized_entropy: support cardinality must be >= 1 (question " +
                              dist.question_id + ")");
    }
    if (!dist.valid()) {
        throw ValidationError("normalized_entropy: distribution for question " + dist.question_id +
                              " is invalid (no counted answers)");
    }
    GradeScore score;
    score.question_id = dist.question_id;
    score.scope = dist.scope;
    score.prompt_id = dist.prompt_id;
    score.support_cardinality = support_cardinality;
    if (support_cardinality == 1) {
        // log2(1) = 0 denominator; a one-value support can never show variety.
        score.entropy = 0.0;
        return score;
    }
    double h = 0.0;
    for (const auto& [value, p] : dist.probabilities) {
        if (p > 0.0) h -= p * std::log2(p);
    }
    double e = h / std::log2(static_cast<double>(support_cardinality));
    score.entropy = std::clamp(e, 0.0, 1.0);
    return score;
}

ScoreAggregate aggregate_scores(std::span<const double> values) {
    if (values.empty()) throw ValidationError("aggregate_scores: empty input");
    ScoreAggregate agg;
    agg.count = values.size();
    agg.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    if (values.size() == 1) {
        agg.standard_error = 0.0;
        return agg;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    const double sample_std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    agg.standard_error = sample_std / std::sqrt(static_cast<double>(values.size()));
    return agg;
}

ModelScoreFragment model_score(std::span<const GradeScore> scores) {
    if (scores.empty()) throw ValidationError("model_score: empty score list");
    std::vector<double> multi, single;
    for (const auto& s : scores) {
        (s.scope == DistributionScope::multi_prompt ? multi : single).push_back(s.entropy);
    }
    ModelScoreFragment frag;
    if (!multi.empty()) frag.multi = aggregate_scores(multi);
    if (!single.empty()) frag.single = aggregate_scores(single);
    return frag;
}

DefaultBehaviorSummary detect_default_behaviors(std::span<const ConceptDistribution> items,
                                                double tau) {
    DefaultBehaviorSummary summary;
    std::set<std::string> concepts, flagged_concepts;
    for (const auto& item : items) {
        if (!item.dist.valid()) continue;
        concepts.insert(item.concept_id);
        ++summary.stats.n_total;
        const auto dominant = std::max_element(
            item.dist.probabilities.begin(), item.dist.probabilities.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
        if (dominant == item.dist.probabilities.end()) continue;
        if (dominant->second >= tau) {
            DefaultBehavior b;
            b.question_id = item.dist.question_id;
            b.scope = item.dist.scope;
            b.prompt_id = item.dist.prompt_id;
            b.value = dominant->first;
            b.frequency = dominant->second;
            b.tau = tau;
            summary.behaviors.push_back(std::move(b));
            ++summary.stats.n_flagged;
            flagged_concepts.insert(item.concept_id);
        }
    }
    summary.stats.n_concepts = concepts.size();
    summary.stats.n_concepts_flagged = flagged_concepts.size();
    if (!concepts.empty()) {
        summary.stats.pct_at_least_one =
            static_cast<double>(flagged_concepts.size()) / static_cast<double>(concepts.size());
    }
    if (summary.stats.n_total > 0) {
        summary.stats.pct_total = static_cast<double>(summary.stats.n_flagged) /
                                  static_cast<double>(summary.stats.n_total);
    }
    return summary;
}

double nota_rate(std::span<const AnswerRecord> answers) {
    if (answers.empty()) throw ValidationError("nota_rate: empty answer list");
    std::size_t sentinel = 0;
    for (const auto& a : answers) {
        if (a.mapped_value == kSentinel) ++sentinel;
    }
    return static_cast<double>(sentinel) / static_cast<double>(answers.size());
}

double total_variation(const ValueDistribution& p, const ValueDistribution& q) {
    if (!p.valid() || !q.valid()) {
        throw ValidationError("total_variation: invalid distribution for question " +
                              (p.valid() ? q.question_id : p.question_id));
    }
    std::set<std::string> values;
    for (const auto& [v, _] : p.probabilities) values.insert(v);
    for (const auto& [v, _] : q.probabilities) values.insert(v);
    double l1 = 0.0;
    for (const auto& v : values) l1 += std::abs(p.probability_of(v) - q.probability_of(v));
    return 0.5 * l1;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
    if (x.size() < 2) throw ValidationError("pearson: need at least 2 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw ValidationError("pearson: zero variance makes the correlation undefined");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

// Average ranks, 1-based; ties share the mean of their rank range.
std::vector<double> average_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
    if (x.size() < 2) throw ValidationError("spearman: need at least 2 points");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry);
}

}  // namespace grade
