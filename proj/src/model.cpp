#include "grade/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "grade/errors.hpp"
#include "grade/util.hpp"

namespace grade {

bool is_sentinel(std::string_view value) {
    const std::string n = normalize_value(value);
    return n == kSentinel || n == "none of the above" || n == "none";
}

const char* to_string(PromptKind kind) {
    return kind == PromptKind::common ? "common" : "uncommon";
}

std::optional<PromptKind> prompt_kind_from(std::string_view s) {
    if (s == "common") return PromptKind::common;
    if (s == "uncommon") return PromptKind::uncommon;
    return std::nullopt;
}

const char* to_string(DistributionScope scope) {
    return scope == DistributionScope::single_prompt ? "single_prompt" : "multi_prompt";
}

bool SupportSet::contains(std::string_view v) const {
    return std::find(values.begin(), values.end(), v) != values.end();
}

std::string ImageRecord::make_id(const std::string& model_id, const std::string& prompt_id,
                                 std::int64_t seed) {
    return model_id + ":" + prompt_id + ":" + std::to_string(seed);
}

std::optional<ParsedImageId> parse_image_id(std::string_view id) {
    const auto last = id.rfind(':');
    if (last == std::string_view::npos || last + 1 >= id.size()) return std::nullopt;
    const auto first = id.rfind(':', last - 1);
    if (first == std::string_view::npos || first == 0) return std::nullopt;
    ParsedImageId out;
    out.model_id = std::string(id.substr(0, first));
    out.prompt_id = std::string(id.substr(first + 1, last - first - 1));
    if (out.prompt_id.empty()) return std::nullopt;
    const std::string seed_str(id.substr(last + 1));
    try {
        std::size_t consumed = 0;
        out.seed = std::stoll(seed_str, &consumed);
        if (consumed != seed_str.size()) return std::nullopt;
    } catch (const std::exception&) {
        return std::nullopt;
    }
    return out;
}

double ValueDistribution::probability_of(std::string_view value) const {
    const auto it = probabilities.find(std::string(value));
    return it == probabilities.end() ? 0.0 : it->second;
}

const SchemaConcept* ConceptSchema::find_concept(std::string_view concept_id) const {
    for (const auto& c : concepts) {
        if (c.subject.id == concept_id) return &c;
    }
    return nullptr;
}

const Prompt* ConceptSchema::find_prompt(std::string_view prompt_id) const {
    for (const auto& c : concepts) {
        for (const auto& p : c.prompts) {
            if (p.id == prompt_id) return &p;
        }
    }
    return nullptr;
}

const SchemaQuestion* ConceptSchema::find_question(std::string_view question_id) const {
    for (const auto& c : concepts) {
        for (const auto& q : c.questions) {
            if (q.question.id == question_id) return &q;
        }
    }
    return nullptr;
}

const SchemaConcept* ConceptSchema::concept_of_question(std::string_view question_id) const {
    for (const auto& c : concepts) {
        for (const auto& q : c.questions) {
            if (q.question.id == question_id) return &c;
        }
    }
    return nullptr;
}

std::ostream& operator<<(std::ostream& os, const Violation& v) {
    return os << v.rule << " [" << v.id << "]: " << v.message;
}

std::vector<Violation> validate_schema(const ConceptSchema& schema) {
    std::vector<Violation> out;
    auto add = [&out](const std::string& id, const std::string& rule, const std::string& msg) {
        out.push_back({id, rule, msg});
    };

    std::set<std::string> concept_ids, prompt_ids, question_ids;

    for (const auto& entry : schema.concepts) {
        const Concept& c = entry.subject;
        if (c.id.empty()) add(c.name, "concept.id", "concept id is empty");
        if (!concept_ids.insert(c.id).second)
            add(c.id, "concept.id.unique", "duplicate concept id");
        if (c.name.empty()) {
            add(c.id, "concept.name", "concept name is empty");
        } else if (c.name != normalize_value(c.name)) {
            add(c.id, "concept.name.normalized",
                "concept name is not lowercase-normalized: \"" + c.name + "\"");
        }

        for (const auto& p : entry.prompts) {
            if (p.id.empty()) add(c.id, "prompt.id", "prompt id is empty");
            if (!prompt_ids.insert(p.id).second)
                add(p.id, "prompt.id.unique", "duplicate prompt id");
            if (p.concept_id != c.id)
                add(p.id, "prompt.concept", "prompt concept_id does not match its concept");
            if (!contains_token(p.text, c.name))
                add(p.id, "prompt.contains_concept",
                    "prompt text does not mention \"" + c.name + "\": \"" + p.text + "\"");
        }

        for (const auto& sq : entry.questions) {
            const AttributeQuestion& q = sq.question;
            if (q.id.empty()) add(c.id, "question.id", "question id is empty");
            if (!question_ids.insert(q.id).second)
                add(q.id, "question.id.unique", "duplicate question id");
            if (q.concept_id != c.id)
                add(q.id, "question.concept", "question concept_id does not match its concept");
            if (q.attribute_label.empty())
                add(q.id, "question.attribute_label", "attribute label is empty");
            if (q.question_text.empty() || q.question_text.back() != '?')
                add(q.id, "question.text", "question text does not end with '?'");

            const SupportSet& s = sq.support;
            if (s.question_id != q.id)
                add(q.id, "support.question", "support question_id does not match its question");
            if (s.values.empty())
                add(q.id, "support.nonempty", "support set is empty");
            std::set<std::string> seen;
            for (const auto& v : s.values) {
                if (v != normalize_value(v))
                    add(q.id, "support.normalized",
                        "support value not normalized: \"" + v + "\"");
                if (is_sentinel(v))
                    add(q.id, "support.sentinel", "sentinel listed as a support value");
                if (!seen.insert(normalize_value(v)).second)
                    add(q.id, "support.unique", "duplicate support value: \"" + v + "\"");
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

const json& require(const json& j, const char* key, const char* what) {
    if (!j.contains(key)) {
        throw ValidationError(std::string("missing field \"") + key + "\" in " + what);
    }
    return j.at(key);
}

}  // namespace

nlohmann::json schema_to_json(const ConceptSchema& schema) {
    json concepts = json::array();
    for (const auto& entry : schema.concepts) {
        json prompts = json::array();
        for (const auto& p : entry.prompts) {
            prompts.push_back({{"id", p.id},
                               {"text", p.text},
                               {"kind", to_string(p.kind)},
                               {"ordinal", p.ordinal}});
        }
        json questions = json::array();
        for (const auto& sq : entry.questions) {
            questions.push_back({{"id", sq.question.id},
                                 {"attribute_label", sq.question.attribute_label},
                                 {"question_text", sq.question.question_text},
                                 {"support", sq.support.values}});
        }
        concepts.push_back({{"id", entry.subject.id},
                            {"name", entry.subject.name},
                            {"prompts", prompts},
                            {"questions", questions}});
    }
    return json{{"concepts", concepts}};
}

ConceptSchema schema_from_json(const nlohmann::json& doc) {
    ConceptSchema schema;
    if (!doc.is_object()) throw ValidationError("schema document is not a JSON object");
    for (const auto& cj : require(doc, "concepts", "schema")) {
        SchemaConcept entry;
        entry.subject.id = require(cj, "id", "concept").get<std::string>();
        entry.subject.name = require(cj, "name", "concept").get<std::string>();
        if (cj.contains("prompts")) {
            for (const auto& pj : cj.at("prompts")) {
                Prompt p;
                p.id = require(pj, "id", "prompt").get<std::string>();
                p.concept_id = entry.subject.id;
                p.text = require(pj, "text", "prompt").get<std::string>();
                const std::string kind = require(pj, "kind", "prompt").get<std::string>();
                const auto parsed = prompt_kind_from(kind);
                if (!parsed) {
                    throw ValidationError("prompt \"" + p.id + "\" has unknown kind \"" + kind +
                                          "\" (expected common|uncommon)");
                }
                p.kind = *parsed;
                p.ordinal = pj.value("ordinal", 0);
                entry.prompts.push_back(std::move(p));
            }
        }
        if (cj.contains("questions")) {
            for (const auto& qj : cj.at("questions")) {
                SchemaQuestion sq;
                sq.question.id = require(qj, "id", "question").get<std::string>();
                sq.question.concept_id = entry.subject.id;
                sq.question.attribute_label =
                    require(qj, "attribute_label", "question").get<std::string>();
                sq.question.question_text =
                    require(qj, "question_text", "question").get<std::string>();
                sq.support.question_id = sq.question.id;
                for (const auto& v : require(qj, "support", "question")) {
                    sq.support.values.push_back(v.get<std::string>());
                }
                entry.questions.push_back(std::move(sq));
            }
        }
        schema.concepts.push_back(std::move(entry));
    }
    return schema;
}

void save_schema(const ConceptSchema& schema, const std::filesystem::path& path) {
    write_file(path, schema_to_json(schema).dump(2) + "\n");
}

ConceptSchema load_schema(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError("schema file " + path.string() + " is not valid JSON: " + e.what());
    }
    return schema_from_json(doc);
}

nlohmann::json answer_to_json(const AnswerRecord& a) {
    return json{{"image_id", a.image_id},
                {"question_id", a.question_id},
                {"raw_answer", a.raw_answer},
                {"mapped_value", a.mapped_value}};
}

AnswerRecord answer_from_json(const nlohmann::json& j) {
    AnswerRecord a;
    a.image_id = require(j, "image_id", "answer").get<std::string>();
    a.question_id = require(j, "question_id", "answer").get<std::string>();
    a.raw_answer = require(j, "raw_answer", "answer").get<std::string>();
    a.mapped_value = require(j, "mapped_value", "answer").get<std::string>();
    return a;
}

std::vector<AnswerRecord> load_answers_jsonl(const std::filesystem::path& path) {
    std::vector<AnswerRecord> out;
    for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        try {
            out.push_back(answer_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": bad answer record: " + e.what());
        }
    });
    return out;
}

nlohmann::json image_to_json(const ImageRecord& r) {
    return json{{"id", r.id},         {"prompt_id", r.prompt_id},
                {"model_id", r.model_id}, {"seed", r.seed},
                {"uri", r.uri},       {"content_hash", r.content_hash}};
}

ImageRecord image_from_json(const nlohmann::json& j) {
    ImageRecord r;
    r.id = require(j, "id", "image").get<std::string>();
    r.prompt_id = require(j, "prompt_id", "image").get<std::string>();
    r.model_id = require(j, "model_id", "image").get<std::string>();
    r.seed = require(j, "seed", "image").get<std::int64_t>();
    r.uri = require(j, "uri", "image").get<std::string>();
    r.content_hash = require(j, "content_hash", "image").get<std::string>();
    return r;
}

std::vector<ImageRecord> load_manifest_jsonl(const std::filesystem::path& path) {
    std::vector<ImageRecord> out;
    std::set<std::string> triples;
    for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        ImageRecord r;
        try {
            r = image_from_json(json::parse(line));
        } catch (const json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": bad image record: " + e.what());
        }
        const std::string key =
            r.prompt_id + "\x1f" + r.model_id + "\x1f" + std::to_string(r.seed);
        if (!triples.insert(key).second) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": duplicate (prompt_id, model_id, seed) = (" + r.prompt_id +
                                  ", " + r.model_id + ", " + std::to_string(r.seed) + ")");
        }
        out.push_back(std::move(r));
    });
    return out;
}

void save_manifest_jsonl(const std::vector<ImageRecord>& records,
                         const std::filesystem::path& path) {
    std::ostringstream ss;
    for (const auto& r : records) ss << image_to_json(r).dump() << "\n";
    write_file(path, ss.str());
}

nlohmann::json distribution_to_json(const ValueDistribution& d) {
    json probs = json::object();
    for (const auto& [value, p] : d.probabilities) probs[value] = p;
    json j{{"question_id", d.question_id},
           {"scope", to_string(d.scope)},
           {"probabilities", probs},
           {"n_counted", d.n_counted},
           {"n_discarded", d.n_discarded},
           {"valid", d.valid()}};
    if (d.scope == DistributionScope::single_prompt) j["prompt_id"] = d.prompt_id;
    return j;
}

ValueDistribution distribution_from_json(const nlohmann::json& j) {
    ValueDistribution d;
    d.question_id = require(j, "question_id", "distribution").get<std::string>();
    const std::string scope = require(j, "scope", "distribution").get<std::string>();
    if (scope == "single_prompt") {
        d.scope = DistributionScope::single_prompt;
        d.prompt_id = j.value("prompt_id", "");
    } else if (scope == "multi_prompt") {
        d.scope = DistributionScope::multi_prompt;
    } else {
        throw ValidationError("distribution has unknown scope \"" + scope + "\"");
    }
    for (const auto& [value, p] : require(j, "probabilities", "distribution").items()) {
        d.probabilities[value] = p.get<double>();
    }
    d.n_counted = require(j, "n_counted", "distribution").get<std::size_t>();
    d.n_discarded = require(j, "n_discarded", "distribution").get<std::size_t>();
    return d;
}

nlohmann::json score_to_json(const GradeScore& s) {
    json j{{"question_id", s.question_id},
           {"scope", to_string(s.scope)},
           {"entropy", s.entropy},
           {"support_cardinality", s.support_cardinality}};
    if (s.scope == DistributionScope::single_prompt) j["prompt_id"] = s.prompt_id;
    return j;
}

GradeScore score_from_json(const nlohmann::json& j) {
    GradeScore s;
    s.question_id = require(j, "question_id", "score").get<std::string>();
    const std::string scope = require(j, "scope", "score").get<std::string>();
    if (scope == "single_prompt") {
        s.scope = DistributionScope::single_prompt;
        s.prompt_id = j.value("prompt_id", "");
    } else if (scope == "multi_prompt") {
        s.scope = DistributionScope::multi_prompt;
    } else {
        throw ValidationError("score has unknown scope \"" + scope + "\"");
    }
    s.entropy = require(j, "entropy", "score").get<double>();
    s.support_cardinality = require(j, "support_cardinality", "score").get<std::size_t>();
    return s;
}

namespace {

json behavior_stats_to_json(const DefaultBehaviorStats& s) {
    return json{{"pct_at_least_one", s.pct_at_least_one},
                {"pct_total", s.pct_total},
                {"n_flagged", s.n_flagged},
                {"n_total", s.n_total},
                {"n_concepts", s.n_concepts},
                {"n_concepts_flagged", s.n_concepts_flagged}};
}

DefaultBehaviorStats behavior_stats_from_json(const json& j) {
    DefaultBehaviorStats s;
    s.pct_at_least_one = j.value("pct_at_least_one", 0.0);
    s.pct_total = j.value("pct_total", 0.0);
    s.n_flagged = j.value("n_flagged", std::size_t{0});
    s.n_total = j.value("n_total", std::size_t{0});
    s.n_concepts = j.value("n_concepts", std::size_t{0});
    s.n_concepts_flagged = j.value("n_concepts_flagged", std::size_t{0});
    return s;
}

}  // namespace

nlohmann::json report_to_json(const ModelReport& r) {
    json scores = json::array();
    for (const auto& s : r.per_distribution_scores) scores.push_back(score_to_json(s));
    json behaviors = json::array();
    for (const auto& b : r.default_behaviors) {
        json bj{{"question_id", b.question_id},
                {"scope", to_string(b.scope)},
                {"value", b.value},
                {"frequency", b.frequency},
                {"tau", b.tau}};
        if (b.scope == DistributionScope::single_prompt) bj["prompt_id"] = b.prompt_id;
        behaviors.push_back(std::move(bj));
    }
    return json{{"model_id", r.model_id},
                {"per_distribution_scores", scores},
                {"mean_multi", r.mean_multi},
                {"mean_single", r.mean_single},
                {"standard_error_multi", r.standard_error_multi},
                {"standard_error_single", r.standard_error_single},
                {"default_behavior_multi", behavior_stats_to_json(r.default_behavior_multi)},
                {"default_behavior_single", behavior_stats_to_json(r.default_behavior_single)},
                {"default_behaviors", behaviors},
                {"nota_rate", r.nota_rate},
                {"n_excluded_invalid", r.n_excluded_invalid}};
}

ModelReport report_from_json(const nlohmann::json& j) {
    ModelReport r;
    r.model_id = require(j, "model_id", "report").get<std::string>();
    for (const auto& sj : require(j, "per_distribution_scores", "report")) {
        r.per_distribution_scores.push_back(score_from_json(sj));
    }
    r.mean_multi = j.value("mean_multi", 0.0);
    r.mean_single = j.value("mean_single", 0.0);
    r.standard_error_multi = j.value("standard_error_multi", 0.0);
    r.standard_error_single = j.value("standard_error_single", 0.0);
    if (j.contains("default_behavior_multi"))
        r.default_behavior_multi = behavior_stats_from_json(j.at("default_behavior_multi"));
    if (j.contains("default_behavior_single"))
        r.default_behavior_single = behavior_stats_from_json(j.at("default_behavior_single"));
    if (j.contains("default_behaviors")) {
        for (const auto& bj : j.at("default_behaviors")) {
            DefaultBehavior b;
            b.question_id = require(bj, "question_id", "default behavior").get<std::string>();
            const std::string scope = require(bj, "scope", "default behavior").get<std::string>();
            b.scope = scope == "multi_prompt" ? DistributionScope::multi_prompt
                                              : DistributionScope::single_prompt;
            b.prompt_id = bj.value("prompt_id", "");
            b.value = require(bj, "value", "default behavior").get<std::string>();
            b.frequency = require(bj, "frequency", "default behavior").get<double>();
            b.tau = bj.value("tau", 0.8);
            r.default_behaviors.push_back(std::move(b));
        }
    }
    r.nota_rate = j.value("nota_rate", 0.0);
    r.n_excluded_invalid = j.value("n_excluded_invalid", std::size_t{0});
    return r;
}

}  // namespace grade
