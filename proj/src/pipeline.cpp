#include "grade/pipeline.hpp"

#include <algorithm>
#include <set>

#include "grade/errors.hpp"
#include "grade/extraction.hpp"
#include "grade/metrics.hpp"
#include "grade/reporting.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

ScoreOutcome score_answers(const ConceptSchema& schema, std::span<const AnswerRecord> answers,
                           std::string model_id, double tau) {
    if (answers.empty()) throw ValidationError("no answers to score");

    // (question_id -> prompt_id -> answers), validated up front.
    std::map<std::string, std::map<std::string, std::vector<AnswerRecord>>> grouped;
    for (const AnswerRecord& a : answers) {
        const SchemaQuestion* sq = schema.find_question(a.question_id);
        if (!sq) throw ValidationError("answer references unknown question " + a.question_id);
        if (!is_sentinel(a.mapped_value) && !sq->support.contains(a.mapped_value)) {
            throw ValidationError("answer value \"" + a.mapped_value +
                                  "\" is outside the support of " + a.question_id);
        }
        const auto parsed = parse_image_id(a.image_id);
        if (!parsed) throw ValidationError("unparseable image id: " + a.image_id);
        if (model_id.empty()) {
            model_id = parsed->model_id;
        } else if (parsed->model_id != model_id) {
            throw ValidationError("answers mix models " + model_id + " and " + parsed->model_id);
        }
        const Prompt* prompt = schema.find_prompt(parsed->prompt_id);
        if (!prompt) {
            throw ValidationError("image " + a.image_id + " references unknown prompt " +
                                  parsed->prompt_id);
        }
        const SchemaConcept* qc = schema.concept_of_question(a.question_id);
        if (prompt->concept_id != qc->subject.id) {
            throw ValidationError("answer pairs prompt " + prompt->id + " with question " +
                                  a.question_id + " from another concept");
        }
        grouped[a.question_id][parsed->prompt_id].push_back(a);
    }

    ScoreOutcome outcome;
    outcome.report.model_id = model_id;
    std::vector<ConceptDistribution> multi_items;
    std::vector<ConceptDistribution> single_items;

    for (const SchemaConcept& sc : schema.concepts) {
        for (const SchemaQuestion& sq : sc.questions) {
            const auto qit = grouped.find(sq.question.id);
            if (qit == grouped.end()) continue;  // question never asked

            std::vector<ValueDistribution> singles;
            for (const Prompt& prompt : sc.prompts) {
                const auto pit = qit->second.find(prompt.id);
                if (pit == qit->second.end()) continue;
                singles.push_back(estimate_single_prompt(pit->second, sq.question.id, prompt.id));
            }
            if (singles.empty()) continue;
            const ValueDistribution multi = estimate_multi_prompt(singles);

            for (const ValueDistribution& d : singles) {
                outcome.distributions.push_back(d);
                if (d.valid()) {
                    outcome.report.per_distribution_scores.push_back(
                        normalized_entropy(d, sq.support.cardinality()));
                    single_items.push_back({sc.subject.id, d});
                } else {
                    ++outcome.report.n_excluded_invalid;
                }
            }
            outcome.distributions.push_back(multi);
            if (multi.valid()) {
                outcome.report.per_distribution_scores.push_back(
                    normalized_entropy(multi, sq.support.cardinality()));
                multi_items.push_back({sc.subject.id, multi});
            } else {
                ++outcome.report.n_excluded_invalid;
            }
        }
    }

    const ModelScoreFragment fragment = model_score(outcome.report.per_distribution_scores);
    outcome.report.mean_multi = fragment.multi.mean;
    outcome.report.standard_error_multi = fragment.multi.standard_error;
    outcome.report.mean_single = fragment.single.mean;
    outcome.report.standard_error_single = fragment.single.standard_error;

    DefaultBehaviorSummary multi_summary = detect_default_behaviors(multi_items, tau);
    DefaultBehaviorSummary single_summary = detect_default_behaviors(single_items, tau);
    outcome.report.default_behavior_multi = multi_summary.stats;
    outcome.report.default_behavior_single = single_summary.stats;
    outcome.report.default_behaviors = std::move(multi_summary.behaviors);
    outcome.report.default_behaviors.insert(outcome.report.default_behaviors.end(),
                                            single_summary.behaviors.begin(),
                                            single_summary.behaviors.end());
    outcome.report.nota_rate = nota_rate(answers);
    return outcome;
}

namespace {

std::vector<double> scores_of(const ModelReport& report, DistributionScope scope) {
    std::vector<const GradeScore*> picked;
    for (const GradeScore& s : report.per_distribution_scores) {
        if (s.scope == scope) picked.push_back(&s);
    }
    std::sort(picked.begin(), picked.end(), [](const GradeScore* a, const GradeScore* b) {
        if (a->question_id != b->question_id) return a->question_id < b->question_id;
        return a->prompt_id < b->prompt_id;
    });
    std::vector<double> out;
    out.reserve(picked.size());
    for (const GradeScore* s : picked) out.push_back(s->entropy);
    return out;
}

}  // namespace

std::vector<PairComparison> compare_reports(std::span<const ModelReport> reports,
                                            const PermutationOptions& options) {
    if (reports.size() < 2) throw ValidationError("compare needs at least two reports");
    {
        std::set<std::string> ids;
        for (const ModelReport& r : reports) {
            if (!ids.insert(r.model_id).second) {
                throw ValidationError("duplicate model in compare: " + r.model_id);
            }
        }
    }

    std::vector<PairComparison> out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        for (std::size_t j = i + 1; j < reports.size(); ++j) {
            const ModelReport& a = reports[i];
            const ModelReport& b = reports[j];
            // Canonical pair id so the seed ignores argument order.
            const auto key = a.model_id <= b.model_id
                                 ? a.model_id + "|" + b.model_id
                                 : b.model_id + "|" + a.model_id;
            PermutationOptions pair_options = options;
            pair_options.seed = derive_stream_seed(options.seed, key);

            PairComparison cmp;
            cmp.model_a = a.model_id;
            cmp.model_b = b.model_id;
            cmp.multi = permutation_test(scores_of(a, DistributionScope::multi_prompt),
                                         scores_of(b, DistributionScope::multi_prompt),
                                         pair_options);
            cmp.single = permutation_test(scores_of(a, DistributionScope::single_prompt),
                                          scores_of(b, DistributionScope::single_prompt),
                                          pair_options);
            out.push_back(std::move(cmp));
        }
    }
    return out;
}

namespace {

json permutation_to_json(const PermutationTestResult& r) {
    return json{{"d_obs", r.d_obs},          {"p_value", r.p_value},
                {"n_permutations", r.n_permutations}, {"alpha", r.alpha},
                {"significant", r.significant},       {"seed", r.seed}};
}

}  // namespace

json comparisons_to_json(std::span<const PairComparison> pairs, const json& config) {
    json doc;
    doc["config"] = config;
    // The tested statistic is the mean difference of per-distribution GRADE
    // scores; distributions themselves are compared via the TVD matrix.
    doc["statistic"] = "mean difference of per-distribution normalized entropies";
    doc["pairs"] = json::array();
    for (const PairComparison& c : pairs) {
        doc["pairs"].push_back(json{{"model_a", c.model_a},
                                    {"model_b", c.model_b},
                                    {"multi", permutation_to_json(c.multi)},
                                    {"single", permutation_to_json(c.single)}});
    }
    return doc;
}

std::map<std::pair<std::string, std::string>, double> mean_tvd_pairs(
    const std::vector<std::string>& models,
    const std::vector<std::vector<ValueDistribution>>& dists_per_model) {
    if (models.size() != dists_per_model.size()) {
        throw ValidationError("one distribution set per model is required");
    }

    // question_id -> valid multi-prompt distribution, per model
    std::vector<std::map<std::string, const ValueDistribution*>> by_question(models.size());
    for (std::size_t m = 0; m < models.size(); ++m) {
        for (const ValueDistribution& d : dists_per_model[m]) {
            if (d.scope == DistributionScope::multi_prompt && d.valid()) {
                by_question[m][d.question_id] = &d;
            }
        }
    }

    std::map<std::pair<std::string, std::string>, double> out;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            double sum = 0.0;
            std::size_t shared = 0;
            for (const auto& [qid, dist] : by_question[i]) {
                const auto it = by_question[j].find(qid);
                if (it == by_question[j].end()) continue;
                sum += total_variation(*dist, *it->second);
                ++shared;
            }
            if (shared == 0) {
                throw ValidationError("models " + models[i] + " and " + models[j] +
                                      " share no scored question");
            }
            out[pair_key(models[i], models[j])] = sum / static_cast<double>(shared);
        }
    }
    return out;
}

void save_distributions_json(std::span<const ValueDistribution> dists, const std::string& model_id,
                             const json& config, const fs::path& path) {
    json doc;
    doc["model"] = model_id;
    doc["config"] = config;
    doc["distributions"] = json::array();
    for (const ValueDistribution& d : dists) doc["distributions"].push_back(distribution_to_json(d));
    write_file_atomic(path, doc.dump(2) + "\n");
}

DistributionsDoc load_distributions_json(const fs::path& path) {
    const json doc = json::parse(read_file(path));
    DistributionsDoc out;
    out.model = doc.at("model").get<std::string>();
    for (const json& j : doc.at("distributions")) {
        out.distributions.push_back(distribution_from_json(j));
    }
    return out;
}

}  // namespace grade
