#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"

#include "grade/backends.hpp"

namespace grade {

// Resolved run settings. Field defaults are the method's reference settings:
// 3 common + 3 uncommon prompts, 4 attributes per concept, 100 images per
// prompt, tau 0.8, 100,000 permutations at alpha 0.05, temperature-0 backends.
struct RunConfig {
    int concepts = 100;
    int prompts_common = 3;
    int prompts_uncommon = 3;
    int attributes_per_concept = 4;
    int images_per_prompt = 100;
    std::int64_t base_seed = 0;  // first image seed per prompt
    double tau = 0.8;
    long permutations = 100000;
    double alpha = 0.05;
    std::uint64_t seed = 0;  // statistics seed (permutation tests)
    int workers = 4;
    int images_per_caption = 20;
    std::size_t caption_cap = 150;
    std::string templates_dir = "templates";
    std::string cache_dir = "cache";
    std::string runs_dir = "runs";
    std::map<std::string, nlohmann::json> backends;  // "llm"/"vqa"/"t2i" -> profile

    void validate() const;
    // Full resolved settings; embedded in outputs for provenance.
    nlohmann::json to_json() const;
};

// Strict parse: unknown keys are errors. Missing keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config_file(const std::filesystem::path& path);

// Materialized profile for one role, with cache_dir and auth_env defaulted
// from the run config (GRADE_<ROLE>_API_KEY for http backends).
BackendProfile backend_profile(const RunConfig& cfg, BackendRole role);

}  // namespace grade
