#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "grade/backends.hpp"
#include "grade/model.hpp"

namespace grade {

// Prompt templates, one file per stage. Placeholders in {braces}:
//   concept_collection.txt        {n} {exclude}
//   common_prompt_generation.txt  {concept} {n} {exclude}
//   uncommon_prompt_generation.txt {concept} {n} {exclude}
//   attribute_generation.txt      {concept} {n} {exclude}
//   attribute_values_generation.txt {concept} {question} {prompt}
//   answer_generation.txt         {question} {values}
//   caption_filtering.txt         {concept} {attribute} {caption}
//   synonym_check.txt             {values}
struct TemplateSet {
    std::string concept_collection;
    std::string common_prompts;
    std::string uncommon_prompts;
    std::string attribute_generation;
    std::string attribute_values;
    std::string answer;
    std::string caption_filter;
    std::string synonym_check;

    static TemplateSet load(const std::filesystem::path& dir);
};

// Generic color/shape/material vocabulary kept out of prompt texts so prompts
// stay underspecified along the attributes being measured.
const std::vector<std::string>& default_attribute_blocklist();

// Lowercase identifier from a normalized name: non-alphanumerics become '_'.
std::string slugify(std::string_view name);

struct GenCounts {
    int concepts = 100;
    int prompts_common = 3;
    int prompts_uncommon = 3;
    int attributes_per_concept = 4;
};

// Each generator deduplicates model output and retries a shortfall with every
// candidate seen so far — accepted or rejected — listed in {exclude}, up to
// three extra rounds, then throws a shortfall BackendError.
std::vector<Concept> generate_concepts(Backend& llm, const TemplateSet& templates, int n);

std::vector<Prompt> generate_prompts(Backend& llm, const TemplateSet& templates,
                                     const Concept& subject, PromptKind kind, int n,
                                     std::span<const std::string> blocklist);

std::vector<AttributeQuestion> generate_attributes(Backend& llm, const TemplateSet& templates,
                                                   const Concept& subject, int n);

// Union of per-prompt value candidates, normalized and sorted, then collapsed
// through one synonym pass that keeps each group's lexicographically smallest
// member. The sentinel is never part of the result.
SupportSet generate_value_support(Backend& llm, const TemplateSet& templates,
                                  const Concept& subject, const AttributeQuestion& question,
                                  std::span<const Prompt> prompts);

// Full pipeline: concepts, prompts, attributes, value supports, then a final
// leak check that regenerates any prompt mentioning a support value.
ConceptSchema generate_schema(Backend& llm, const TemplateSet& templates, const GenCounts& counts);

}  // namespace grade
