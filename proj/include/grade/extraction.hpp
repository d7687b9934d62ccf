#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <set>
#include <span>
#include <utility>

#include "grade/backends.hpp"
#include "grade/model.hpp"

namespace grade {

struct ExtractionOptions {
    int workers = 4;
    std::string answer_template;  // VQA prompt, {question}/{values} placeholders
};

struct ExtractionStats {
    std::size_t emitted = 0;
    std::size_t skipped_existing = 0;  // pairs already answered before the run
    std::size_t failed = 0;            // pairs whose backend call failed

    bool operator==(const ExtractionStats&) const = default;
};

using AnswerKey = std::pair<std::string, std::string>;  // (image_id, question_id)

// (image_id, question_id) pairs already present in an answers file; an absent
// file is an empty set.
std::set<AnswerKey> answered_keys(const std::filesystem::path& answers_jsonl);

// Queries the VQA backend once per (image, concept question) pair, skipping
// pairs in `already`. Answers reach the sink in deterministic task order even
// when workers > 1. Per-pair failures are tallied and logged, never fatal.
ExtractionStats extract_answers(const ConceptSchema& schema, std::span<const ImageRecord> images,
                                Backend& vqa, const std::set<AnswerKey>& already,
                                const std::function<void(const AnswerRecord&)>& sink,
                                const ExtractionOptions& options, std::ostream* log = nullptr);

// Appends to answers_path (JSONL, flushed per record), resuming past whatever
// the file already holds. Interrupt and rerun at will; only missing pairs hit
// the backend.
ExtractionStats extract_answers_to_file(const ConceptSchema& schema,
                                        std::span<const ImageRecord> images, Backend& vqa,
                                        const std::filesystem::path& answers_path,
                                        const ExtractionOptions& options,
                                        std::ostream* log = nullptr);

// Empirical value distribution for one (question, prompt) cell. Sentinel
// answers are discarded: they raise n_discarded and never enter the
// probabilities, which are renormalized over the counted answers. A cell
// whose answers were all sentinel comes back invalid.
ValueDistribution estimate_single_prompt(std::span<const AnswerRecord> answers,
                                         const std::string& question_id,
                                         const std::string& prompt_id);

// Question-level distribution: the unweighted mean of the valid per-prompt
// conditionals (each already normalized). Invalid inputs are excluded and the
// divisor shrinks accordingly; their discard counts still accumulate.
ValueDistribution estimate_multi_prompt(std::span<const ValueDistribution> singles);

}  // namespace grade
