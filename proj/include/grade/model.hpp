#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace grade {

// Reserved mapping outcome for answers outside the support or images that
// fail to depict the concept. Never a member of any SupportSet.
inline constexpr const char* kSentinel = "none_of_the_above";

// True for "none_of_the_above" and common verbalizations of it.
bool is_sentinel(std::string_view value);

enum class PromptKind { common, uncommon };

const char* to_string(PromptKind kind);
std::optional<PromptKind> prompt_kind_from(std::string_view s);

struct Concept {
    std::string id;
    std::string name;  // lowercase-normalized noun, e.g. "cookie"

    bool operator==(const Concept&) const = default;
};

struct Prompt {
    std::string id;
    std::string concept_id;
    std::string text;
    PromptKind kind = PromptKind::common;
    int ordinal = 0;  // index within kind

    bool operator==(const Prompt&) const = default;
};

struct AttributeQuestion {
    std::string id;
    std::string concept_id;
    std::string attribute_label;  // e.g. "shape"
    std::string question_text;    // e.g. "What is the shape of the cookie?"

    bool operator==(const AttributeQuestion&) const = default;
};

struct SupportSet {
    std::string question_id;
    std::vector<std::string> values;  // distinct, normalized, sentinel excluded

    // Cardinality used as the entropy denominator. The sentinel is not counted.
    std::size_t cardinality() const { return values.size(); }
    bool contains(std::string_view v) const;

    bool operator==(const SupportSet&) const = default;
};

struct ImageRecord {
    std::string id;
    std::string prompt_id;
    std::string model_id;
    std::int64_t seed = 0;
    std::string uri;           // file path or URL
    std::string content_hash;  // sha256 of the image bytes

    // Canonical id "<model_id>:<prompt_id>:<seed>", so an AnswerRecord's
    // image_id alone pins down the prompt and model it came from.
    static std::string make_id(const std::string& model_id, const std::string& prompt_id,
                               std::int64_t seed);

    bool operator==(const ImageRecord&) const = default;
};

struct ParsedImageId {
    std::string model_id;
    std::string prompt_id;
    std::int64_t seed = 0;
};

std::optional<ParsedImageId> parse_image_id(std::string_view id);

struct AnswerRecord {
    std::string image_id;
    std::string question_id;
    std::string raw_answer;    // VQA output, preserved verbatim
    std::string mapped_value;  // member of the support or kSentinel

    bool operator==(const AnswerRecord&) const = default;
};

enum class DistributionScope { single_prompt, multi_prompt };

const char* to_string(DistributionScope scope);

struct ValueDistribution {
    std::string question_id;
    DistributionScope scope = DistributionScope::single_prompt;
    std::string prompt_id;  // set iff scope == single_prompt
    std::map<std::string, double> probabilities;
    std::size_t n_counted = 0;    // answers that landed in the support
    std::size_t n_discarded = 0;  // sentinel answers, excluded from probabilities

    // A distribution whose answers were all sentinel carries no probabilities
    // and is excluded from aggregation.
    bool valid() const { return n_counted > 0; }
    double probability_of(std::string_view value) const;

    bool operator==(const ValueDistribution&) const = default;
};

struct GradeScore {
    std::string question_id;
    DistributionScope scope = DistributionScope::single_prompt;
    std::string prompt_id;
    double entropy = 0.0;  // normalized entropy in [0, 1]
    std::size_t support_cardinality = 0;

    bool operator==(const GradeScore&) const = default;
};

struct DefaultBehavior {
    std::string question_id;
    DistributionScope scope = DistributionScope::single_prompt;
    std::string prompt_id;
    std::string value;       // the dominant attribute value
    double frequency = 0.0;  // >= tau
    double tau = 0.8;

    bool operator==(const DefaultBehavior&) const = default;
};

struct DefaultBehaviorStats {
    double pct_at_least_one = 0.0;  // fraction of concepts with >= 1 flagged distribution
    double pct_total = 0.0;         // fraction of all distributions flagged
    std::size_t n_flagged = 0;
    std::size_t n_total = 0;
    std::size_t n_concepts = 0;
    std::size_t n_concepts_flagged = 0;

    bool operator==(const DefaultBehaviorStats&) const = default;
};

struct ModelReport {
    std::string model_id;
    std::vector<GradeScore> per_distribution_scores;
    double mean_multi = 0.0;
    double mean_single = 0.0;
    double standard_error_multi = 0.0;
    double standard_error_single = 0.0;
    DefaultBehaviorStats default_behavior_multi;
    DefaultBehaviorStats default_behavior_single;
    std::vector<DefaultBehavior> default_behaviors;
    double nota_rate = 0.0;
    std::size_t n_excluded_invalid = 0;  // all-sentinel distributions left out

    bool operator==(const ModelReport&) const = default;
};

struct PermutationTestResult {
    double d_obs = 0.0;
    double p_value = 1.0;  // in (0, 1]
    long n_permutations = 0;
    double alpha = 0.05;
    bool significant = false;
    std::uint64_t seed = 0;

    bool operator==(const PermutationTestResult&) const = default;
};

// ---------------------------------------------------------------------------
// Schema document

struct SchemaQuestion {
    AttributeQuestion question;
    SupportSet support;

    bool operator==(const SchemaQuestion&) const = default;
};

struct SchemaConcept {
    Concept subject;
    std::vector<Prompt> prompts;
    std::vector<SchemaQuestion> questions;

    bool operator==(const SchemaConcept&) const = default;
};

struct ConceptSchema {
    std::vector<SchemaConcept> concepts;

    const SchemaConcept* find_concept(std::string_view concept_id) const;
    const Prompt* find_prompt(std::string_view prompt_id) const;
    const SchemaQuestion* find_question(std::string_view question_id) const;
    const SchemaConcept* concept_of_question(std::string_view question_id) const;

    bool operator==(const ConceptSchema&) const = default;
};

struct Violation {
    std::string id;  // offending entity id
    std::string rule;
    std::string message;

    bool operator==(const Violation&) const = default;
};

std::ostream& operator<<(std::ostream& os, const Violation& v);

// Scans the whole schema and reports every invariant breach. Never throws on
// bad content; an empty result means the schema is valid.
std::vector<Violation> validate_schema(const ConceptSchema& schema);

// ---------------------------------------------------------------------------
// Serialization. Schema files are a single JSON document; answers and image
// manifests are JSONL with one record per line.

nlohmann::json schema_to_json(const ConceptSchema& schema);
ConceptSchema schema_from_json(const nlohmann::json& doc);  // throws ValidationError
void save_schema(const ConceptSchema& schema, const std::filesystem::path& path);
ConceptSchema load_schema(const std::filesystem::path& path);

nlohmann::json answer_to_json(const AnswerRecord& a);
AnswerRecord answer_from_json(const nlohmann::json& j);
std::vector<AnswerRecord> load_answers_jsonl(const std::filesystem::path& path);

nlohmann::json image_to_json(const ImageRecord& r);
ImageRecord image_from_json(const nlohmann::json& j);
// Throws ValidationError on duplicate (prompt_id, model_id, seed) triples.
std::vector<ImageRecord> load_manifest_jsonl(const std::filesystem::path& path);
void save_manifest_jsonl(const std::vector<ImageRecord>& records,
                         const std::filesystem::path& path);

nlohmann::json distribution_to_json(const ValueDistribution& d);
ValueDistribution distribution_from_json(const nlohmann::json& j);

nlohmann::json score_to_json(const GradeScore& s);
GradeScore score_from_json(const nlohmann::json& j);

nlohmann::json report_to_json(const ModelReport& r);
ModelReport report_from_json(const nlohmann::json& j);

}  // namespace grade
