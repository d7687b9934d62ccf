#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "grade/backends.hpp"
#include "grade/model.hpp"
#include "grade/schema_gen.hpp"

namespace grade {

enum class CaptionVerdict { keep, reject, undecided };

const char* to_string(CaptionVerdict v);

struct CaptionDecision {
    CaptionVerdict verdict = CaptionVerdict::undecided;
    std::string reason;  // raw backend verdict, or the failure message

    bool operator==(const CaptionDecision&) const = default;
};

struct CaptionRecord {
    std::string caption;
    std::string image_uri;  // dataset image paired with the caption

    bool operator==(const CaptionRecord&) const = default;
};

std::vector<CaptionRecord> load_captions_jsonl(const std::filesystem::path& path);

// Asks the LLM whether the caption mentions the concept as an object while
// leaving the queried attribute unstated. keep iff it answers yes; a backend
// failure yields undecided rather than propagating.
CaptionDecision filter_caption(Backend& llm, const TemplateSet& templates, const Concept& subject,
                               const AttributeQuestion& question, const std::string& caption);

struct FilteredCaption {
    CaptionRecord record;
    std::size_t input_index = 0;
    // First seed of this caption's generated-image block; blocks are
    // sequential and non-overlapping in kept order.
    std::int64_t seed_base = 0;

    bool operator==(const FilteredCaption&) const = default;
};

struct FilterStats {
    std::size_t considered = 0;
    std::size_t kept = 0;
    std::size_t rejected = 0;
    std::size_t undecided = 0;  // backend failures, excluded from the kept set

    bool operator==(const FilterStats&) const = default;
};

struct FilterOutcome {
    std::vector<FilteredCaption> kept;  // input order, at most cap
    FilterStats stats;
};

// Streams the captions through filter_caption until cap keeps are collected
// or input runs out (fewer than cap is fine and logged). Classification runs
// in bounded parallel batches; kept order always follows input order.
FilterOutcome collect_filtered(Backend& llm, const TemplateSet& templates, const Concept& subject,
                               const AttributeQuestion& question,
                               std::span<const CaptionRecord> captions, std::size_t cap,
                               int images_per_caption, int workers = 4,
                               std::ostream* log = nullptr);

void save_filtered_jsonl(const FilterOutcome& outcome, const std::filesystem::path& path);
FilterOutcome load_filtered_jsonl(const std::filesystem::path& path);

// Model-vs-training-data comparison over one question: normalized entropies
// of both sides plus TVD and Pearson correlation over the union-aligned
// frequency vectors. pcc is absent when either vector has zero variance.
struct ReferenceComparison {
    double entropy_model = 0.0;
    double entropy_dataset = 0.0;
    std::optional<double> pcc;
    double tvd = 0.0;
};

ReferenceComparison compare_to_reference(const ValueDistribution& model_dist,
                                         const ValueDistribution& dataset_dist,
                                         std::size_t support_cardinality);

nlohmann::json comparison_to_json(const ReferenceComparison& c);

}  // namespace grade
