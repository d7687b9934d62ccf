#include "grade/config.hpp"

#include <algorithm>

#include "grade/errors.hpp"
#include "grade/util.hpp"

using nlohmann::json;

namespace grade {

void RunConfig::validate() const {
    if (concepts <= 0) throw ValidationError("concepts must be positive");
    if (prompts_common <= 0 || prompts_uncommon <= 0) {
        throw ValidationError("prompt counts must be positive");
    }
    if (attributes_per_concept <= 0) throw ValidationError("attributes_per_concept must be positive");
    if (images_per_prompt <= 0) throw ValidationError("images_per_prompt must be positive");
    if (!(tau > 0.0 && tau <= 1.0)) throw ValidationError("tau must be in (0, 1]");
    if (permutations <= 0) throw ValidationError("permutations must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
    if (workers <= 0) throw ValidationError("workers must be positive");
    if (images_per_caption <= 0) throw ValidationError("images_per_caption must be positive");
    if (caption_cap == 0) throw ValidationError("caption_cap must be positive");
    for (const auto& [role, profile] : backends) {
        if (!backend_role_from(role)) throw ValidationError("unknown backend role: " + role);
        if (!profile.is_object()) throw ValidationError("backend " + role + " must be an object");
    }
}

json RunConfig::to_json() const {
    json j{{"concepts", concepts},
           {"prompts_common", prompts_common},
           {"prompts_uncommon", prompts_uncommon},
           {"attributes_per_concept", attributes_per_concept},
           {"images_per_prompt", images_per_prompt},
           {"base_seed", base_seed},
           {"tau", tau},
           {"permutations", permutations},
           {"alpha", alpha},
           {"seed", seed},
           {"workers", workers},
           {"images_per_caption", images_per_caption},
           {"caption_cap", caption_cap},
           {"templates_dir", templates_dir},
           {"cache_dir", cache_dir},
           {"runs_dir", runs_dir}};
    json b = json::object();
    for (const auto& [role, profile] : backends) {
        b[role] = profile_to_json(profile_from_json(profile, *backend_role_from(role)));
    }
    j["backends"] = b;
    return j;
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "concepts") cfg.concepts = value.get<int>();
        else if (key == "prompts_common") cfg.prompts_common = value.get<int>();
        else if (key == "prompts_uncommon") cfg.prompts_uncommon = value.get<int>();
        else if (key == "attributes_per_concept") cfg.attributes_per_concept = value.get<int>();
        else if (key == "images_per_prompt") cfg.images_per_prompt = value.get<int>();
        else if (key == "base_seed") cfg.base_seed = value.get<std::int64_t>();
        else if (key == "tau") cfg.tau = value.get<double>();
        else if (key == "permutations") cfg.permutations = value.get<long>();
        else if (key == "alpha") cfg.alpha = value.get<double>();
        else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
        else if (key == "workers") cfg.workers = value.get<int>();
        else if (key == "images_per_caption") cfg.images_per_caption = value.get<int>();
        else if (key == "caption_cap") cfg.caption_cap = value.get<std::size_t>();
        else if (key == "templates_dir") cfg.templates_dir = value.get<std::string>();
        else if (key == "cache_dir") cfg.cache_dir = value.get<std::string>();
        else if (key == "runs_dir") cfg.runs_dir = value.get<std::string>();
        else if (key == "backends") {
            if (!value.is_object()) throw ValidationError("backends must be an object");
            for (const auto& [role, profile] : value.items()) cfg.backends[role] = profile;
        } else {
            throw ValidationError("unknown config key: " + key);
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

BackendProfile backend_profile(const RunConfig& cfg, BackendRole role) {
    const std::string key = to_string(role);
    const auto it = cfg.backends.find(key);
    if (it == cfg.backends.end()) {
        throw ValidationError("config has no backend for role " + key +
                              " (add it under \"backends\")");
    }
    BackendProfile p = profile_from_json(it->second, role);
    if (p.role != role) {
        throw ValidationError("backend under key " + key + " declares role " +
                              to_string(p.role));
    }
    if (p.cache_dir.empty()) p.cache_dir = cfg.cache_dir;
    if (p.auth_env.empty() && p.kind == BackendKind::http) {
        std::string upper = key;
        std::transform(upper.begin(), upper.end(), upper.begin(),
                       [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
        p.auth_env = "GRADE_" + upper + "_API_KEY";
    }
    return p;
}

}  // namespace grade
