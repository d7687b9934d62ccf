#include "grade/backends.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "httplib.h"

#include "grade/errors.hpp"
#include "grade/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace grade {

const char* to_string(BackendRole role) {
    switch (role) {
        case BackendRole::llm: return "llm";
        case BackendRole::vqa: return "vqa";
        case BackendRole::t2i: return "t2i";
    }
    return "llm";
}

const char* to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::mock: return "mock";
        case BackendKind::http: return "http";
        case BackendKind::directory: return "directory";
    }
    return "mock";
}

std::optional<BackendRole> backend_role_from(std::string_view s) {
    if (s == "llm") return BackendRole::llm;
    if (s == "vqa") return BackendRole::vqa;
    if (s == "t2i") return BackendRole::t2i;
    return std::nullopt;
}

std::optional<BackendKind> backend_kind_from(std::string_view s) {
    if (s == "mock") return BackendKind::mock;
    if (s == "http") return BackendKind::http;
    if (s == "directory") return BackendKind::directory;
    return std::nullopt;
}

void BackendProfile::validate() const {
    if (endpoint.empty()) {
        throw ValidationError(std::string("backend ") + to_string(role) + ": endpoint is required");
    }
    if (model_name.empty()) {
        throw ValidationError(std::string("backend ") + to_string(role) + ": model_name is required");
    }
    if (temperature < 0.0) throw ValidationError("backend temperature must be >= 0");
    if (max_tokens <= 0) throw ValidationError("backend max_tokens must be positive");
    if (request_timeout_s <= 0.0) throw ValidationError("backend request_timeout_s must be positive");
    if (max_retries < 0) throw ValidationError("backend max_retries must be >= 0");
    if (batch_size <= 0) throw ValidationError("backend batch_size must be positive");
    if (rate_limit_per_s < 0.0) throw ValidationError("backend rate_limit_per_s must be >= 0");
}

json profile_to_json(const BackendProfile& p) {
    json j{{"role", to_string(p.role)},
           {"kind", to_string(p.kind)},
           {"endpoint", p.endpoint},
           {"model_name", p.model_name},
           {"temperature", p.temperature},
           {"max_tokens", p.max_tokens},
           {"request_timeout_s", p.request_timeout_s},
           {"max_retries", p.max_retries},
           {"batch_size", p.batch_size},
           {"rate_limit_per_s", p.rate_limit_per_s}};
    if (!p.auth_env.empty()) j["auth_env"] = p.auth_env;
    if (!p.cache_dir.empty()) j["cache_dir"] = p.cache_dir;
    if (!p.params.is_null() && !p.params.empty()) j["params"] = p.params;
    return j;
}

BackendProfile profile_from_json(const json& j, BackendRole role) {
    if (!j.is_object()) throw ValidationError("backend profile must be a JSON object");
    BackendProfile p;
    p.role = role;
    if (j.contains("role")) {
        auto r = backend_role_from(j.at("role").get<std::string>());
        if (!r) throw ValidationError("unknown backend role: " + j.at("role").dump());
        p.role = *r;
    }
    if (j.contains("kind")) {
        auto k = backend_kind_from(j.at("kind").get<std::string>());
        if (!k) throw ValidationError("unknown backend kind: " + j.at("kind").dump());
        p.kind = *k;
    }
    if (j.contains("endpoint")) p.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("model_name")) p.model_name = j.at("model_name").get<std::string>();
    if (j.contains("auth_env")) p.auth_env = j.at("auth_env").get<std::string>();
    if (j.contains("temperature")) p.temperature = j.at("temperature").get<double>();
    if (j.contains("max_tokens")) p.max_tokens = j.at("max_tokens").get<int>();
    if (j.contains("request_timeout_s")) p.request_timeout_s = j.at("request_timeout_s").get<double>();
    if (j.contains("max_retries")) p.max_retries = j.at("max_retries").get<int>();
    if (j.contains("batch_size")) p.batch_size = j.at("batch_size").get<int>();
    if (j.contains("rate_limit_per_s")) p.rate_limit_per_s = j.at("rate_limit_per_s").get<double>();
    if (j.contains("cache_dir")) p.cache_dir = j.at("cache_dir").get<std::string>();
    if (j.contains("params")) p.params = j.at("params");
    return p;
}

std::string request_hash(const BackendProfile& profile, const StructuredRequest& req) {
    json body{{"role", to_string(profile.role)},
              {"model_name", profile.model_name},
              {"temperature", profile.temperature},
              {"max_tokens", profile.max_tokens},
              {"prompt", req.prompt_text},
              {"enum_strict", req.enum_strict}};
    if (!req.image_payload.empty()) body["image_sha256"] = sha256_hex(req.image_payload);
    if (!req.enumerated.empty()) body["enumerated"] = req.enumerated;
    if (!req.extra.is_null() && !req.extra.empty()) body["extra"] = req.extra;
    return sha256_hex(body.dump());
}

// --- cache ------------------------------------------------------------------

ResponseCache::ResponseCache(fs::path root) : root_(std::move(root)) {}

fs::path ResponseCache::entry_path(const std::string& role, const std::string& hash) const {
    return root_ / role / hash.substr(0, 2) / (hash + ".json");
}

std::optional<json> ResponseCache::lookup(const std::string& role,
                                          const std::string& hash) const {
    const fs::path path = entry_path(role, hash);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    json entry = json::parse(read_file(path));
    if (!entry.is_object() || !entry.contains("response")) {
        throw IoError("corrupt cache entry: " + path.string());
    }
    return entry.at("response");
}

void ResponseCache::insert(const std::string& role, const std::string& hash,
                           const json& response) const {
    const fs::path path = entry_path(role, hash);
    fs::create_directories(path.parent_path());
    const json entry{{"request_hash", hash},
                     {"response", response},
                     {"stored_at", static_cast<std::int64_t>(::time(nullptr))}};
    write_file_atomic(path, entry.dump());
}

// --- mock fixtures ----------------------------------------------------------

MockFixtures MockFixtures::load(const fs::path& path) {
    MockFixtures fx;
    for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": invalid fixture JSON: " + e.what());
        }
        if (!j.is_object()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": fixture line must be an object");
        }
        if (j.contains("map_from")) {
            fx.answer_map[normalize_value(j.at("map_from").get<std::string>())] =
                normalize_value(j.at("map_to").get<std::string>());
            return;
        }
        if (j.contains("tag_cycle")) {
            const json& tc = j.at("tag_cycle");
            auto& tags = fx.tag_cycles[tc.at("prompt_id").get<std::string>()];
            tags = tc.at("tags").get<std::vector<std::string>>();
            if (tags.empty()) {
                throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                      ": tag_cycle needs a non-empty tags list");
            }
            return;
        }
        Rule rule;
        if (j.contains("request_hash")) rule.request_hash = j.at("request_hash").get<std::string>();
        if (j.contains("contains")) rule.contains = j.at("contains").get<std::vector<std::string>>();
        if (rule.request_hash.empty() && rule.contains.empty()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": fixture rule needs request_hash or contains");
        }
        if (!j.contains("response")) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": fixture rule needs a response");
        }
        rule.response = j.at("response");
        fx.rules.push_back(std::move(rule));
    });
    return fx;
}

const json* MockFixtures::match(const StructuredRequest& req, const std::string& hash) const {
    // contains-rules search the prompt and the image payload, so VQA fixtures
    // can key on tags embedded in mock images.
    const std::string haystack = req.prompt_text + "\n" + req.image_payload;
    for (const Rule& rule : rules) {
        if (!rule.request_hash.empty()) {
            if (rule.request_hash == hash) return &rule.response;
            continue;
        }
        bool all = true;
        for (const std::string& needle : rule.contains) {
            if (haystack.find(needle) == std::string::npos) {
                all = false;
                break;
            }
        }
        if (all) return &rule.response;
    }
    return nullptr;
}

std::optional<std::string> MockFixtures::map_answer(const std::string& normalized_raw) const {
    auto it = answer_map.find(normalized_raw);
    if (it == answer_map.end()) return std::nullopt;
    return it->second;
}

std::string MockFixtures::tag_for(const std::string& prompt_id, std::int64_t seed) const {
    auto it = tag_cycles.find(prompt_id);
    if (it == tag_cycles.end() || it->second.empty()) return "untagged";
    const auto n = static_cast<std::int64_t>(it->second.size());
    std::int64_t idx = seed % n;
    if (idx < 0) idx += n;
    return it->second[static_cast<std::size_t>(idx)];
}

// --- rate limiting ----------------------------------------------------------

RateLimiter::RateLimiter(double per_second)
    : rate_(per_second), tokens_(per_second > 0 ? 1.0 : 0.0),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
        const auto now = std::chrono::steady_clock::now();
        tokens_ += rate_ * std::chrono::duration<double>(now - last_).count();
        last_ = now;
        if (tokens_ > rate_) tokens_ = rate_;  // burst cap = one second's worth
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        const double wait_s = (1.0 - tokens_) / rate_;
        lock.unlock();
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
        lock.lock();
    }
}

// --- backend ----------------------------------------------------------------

Backend::Backend(BackendProfile profile) : profile_(std::move(profile)) {
    profile_.validate();
    if (profile_.kind == BackendKind::mock) {
        fixtures_ = std::make_unique<MockFixtures>(MockFixtures::load(profile_.endpoint));
    }
    if (!profile_.cache_dir.empty()) cache_.emplace(profile_.cache_dir);
    if (profile_.rate_limit_per_s > 0.0) {
        limiter_ = std::make_unique<RateLimiter>(profile_.rate_limit_per_s);
    }
}

std::optional<std::string> response_answer(const json& response) {
    if (response.is_string()) return response.get<std::string>();
    if (response.is_object()) {
        for (const char* key : {"mapped_value", "answer", "raw_answer"}) {
            if (response.contains(key) && response.at(key).is_string()) {
                return response.at(key).get<std::string>();
            }
        }
    }
    return std::nullopt;
}

namespace {

bool enumerated_ok(const json& response, const std::vector<std::string>& allowed) {
    auto answer = response_answer(response);
    if (!answer) return false;
    const std::string norm = normalize_value(*answer);
    for (const std::string& a : allowed) {
        if (normalize_value(a) == norm) return true;
    }
    return false;
}

std::string join_values(const std::vector<std::string>& values, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += sep;
        out += values[i];
    }
    return out;
}

}  // namespace

json Backend::complete(const StructuredRequest& req) {
    requests_served_.fetch_add(1);
    const std::string role = to_string(profile_.role);
    const std::string hash = request_hash(profile_, req);
    if (cache_) {
        if (auto hit = cache_->lookup(role, hash)) {
            cache_hits_.fetch_add(1);
            return *hit;
        }
    }

    json response = dispatch_with_retries(req);
    if (req.enum_strict && !req.enumerated.empty() && !enumerated_ok(response, req.enumerated)) {
        // One corrective retry, restating the allowed set.
        StructuredRequest corrective = req;
        corrective.prompt_text +=
            "\nYour previous reply was not one of the allowed answers. "
            "Reply with exactly one of: " + join_values(req.enumerated, " | ");
        response = dispatch_with_retries(corrective);
        if (!enumerated_ok(response, req.enumerated)) {
            throw BackendError(BackendError::Kind::schema,
                               role + " response is not in the enumerated answer set: " +
                                   response.dump().substr(0, 200),
                               false);
        }
    }

    if (cache_) cache_->insert(role, hash, response);
    return response;
}

json Backend::dispatch_with_retries(const StructuredRequest& req) {
    const int attempts = profile_.max_retries + 1;
    for (int attempt = 0;; ++attempt) {
        if (limiter_) limiter_->acquire();
        transport_calls_.fetch_add(1);
        try {
            return dispatch_once(req);
        } catch (const BackendError& e) {
            if (!e.retriable || attempt + 1 >= attempts) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(50 * (attempt + 1)));
        }
    }
}

json Backend::dispatch_once(const StructuredRequest& req) {
    switch (profile_.kind) {
        case BackendKind::mock: return mock_complete(req);
        case BackendKind::http: return http_complete(req);
        case BackendKind::directory:
            throw BackendError(BackendError::Kind::config,
                               "directory backends only pair images; they cannot serve "
                               "completion requests",
                               false);
    }
    throw BackendError(BackendError::Kind::config, "unreachable backend kind", false);
}

json Backend::mock_complete(const StructuredRequest& req) {
    const std::string hash = request_hash(profile_, req);
    if (const json* response = fixtures_->match(req, hash)) return *response;
    throw BackendError(BackendError::Kind::config,
                       std::string("no mock fixture matches ") + to_string(profile_.role) +
                           " request " + hash.substr(0, 12) + " (prompt: \"" +
                           req.prompt_text.substr(0, 120) + "\")",
                       false);
}

json Backend::http_complete(const StructuredRequest& req) {
    const std::string& url = profile_.endpoint;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw BackendError(BackendError::Kind::config, "endpoint is not a URL: " + url, false);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    json body{{"model", profile_.model_name},
              {"temperature", profile_.temperature},
              {"max_tokens", profile_.max_tokens},
              {"prompt", req.prompt_text}};
    if (!req.image_payload.empty()) body["image_b64"] = base64_encode(req.image_payload);
    if (!req.enumerated.empty()) body["response_schema"] = json{{"enum", req.enumerated}};
    if (req.extra.is_object()) {
        for (const auto& [k, v] : req.extra.items()) body[k] = v;
    }
    if (profile_.params.is_object()) {
        for (const auto& [k, v] : profile_.params.items()) body[k] = v;
    }

    httplib::Client client(base);
    client.set_connection_timeout(std::chrono::duration<double>(profile_.request_timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(profile_.request_timeout_s));
    httplib::Headers headers;
    if (!profile_.auth_env.empty()) {
        const char* key = std::getenv(profile_.auth_env.c_str());
        if (!key || !*key) {
            throw BackendError(BackendError::Kind::config,
                               "auth env var " + profile_.auth_env + " is not set", false);
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    auto result = client.Post(path, headers, body.dump(), "application/json");
    if (!result) {
        throw BackendError(BackendError::Kind::transport,
                           "request to " + base + path + " failed: " +
                               httplib::to_string(result.error()),
                           true);
    }
    if (result->status == 429 || result->status >= 500) {
        throw BackendError(BackendError::Kind::transport,
                           base + path + " returned status " + std::to_string(result->status),
                           true);
    }
    if (result->status != 200) {
        throw BackendError(BackendError::Kind::config,
                           base + path + " returned status " + std::to_string(result->status) +
                               ": " + result->body.substr(0, 200),
                           false);
    }
    try {
        return json::parse(result->body);
    } catch (const json::parse_error& e) {
        throw BackendError(BackendError::Kind::schema,
                           std::string("response is not valid JSON: ") + e.what(), false);
    }
}

// --- operations -------------------------------------------------------------

namespace {

std::string strip_edge_punct(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && !std::isalnum(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && !std::isalnum(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

}  // namespace

json llm_complete(Backend& backend, const StructuredRequest& req) {
    if (backend.profile().role != BackendRole::llm) {
        throw ValidationError("llm_complete requires a backend with the llm role");
    }
    return backend.complete(req);
}

AnswerRecord vqa_answer(Backend& backend, const ImageRecord& image,
                        const AttributeQuestion& question, const SupportSet& support,
                        const std::string& prompt_template) {
    if (backend.profile().role != BackendRole::vqa) {
        throw ValidationError("vqa_answer requires a backend with the vqa role");
    }
    if (support.question_id != question.id) {
        throw ValidationError("support set " + support.question_id +
                              " does not belong to question " + question.id);
    }

    std::vector<std::string> allowed = support.values;
    allowed.push_back(kSentinel);

    StructuredRequest req;
    req.prompt_text = render_template(
        prompt_template,
        {{"question", question.question_text}, {"values", join_values(allowed, ", ")}});
    req.enumerated = allowed;
    req.enum_strict = false;
    req.image_payload = read_file(image.uri);

    const json response = backend.complete(req);
    auto raw = response_answer(response);
    if (!raw) {
        throw BackendError(BackendError::Kind::schema,
                           "vqa response carries no answer string: " +
                               response.dump().substr(0, 200),
                           false);
    }

    // Map into the support: exact normalized match (with and without edge
    // punctuation, so "Round." still counts), then the fixture mapping table,
    // and anything unresolved counts as the sentinel.
    std::string mapped;
    std::string norm = normalize_value(*raw);
    if (!support.contains(norm) && !is_sentinel(norm)) {
        const std::string stripped = strip_edge_punct(norm);
        if (!stripped.empty() && support.contains(stripped)) norm = stripped;
    }
    if (support.contains(norm)) {
        mapped = norm;
    } else if (is_sentinel(norm)) {
        mapped = kSentinel;
    } else {
        std::optional<std::string> via_table;
        if (backend.fixtures()) via_table = backend.fixtures()->map_answer(norm);
        if (via_table && support.contains(*via_table)) {
            mapped = *via_table;
        } else {
            mapped = kSentinel;
        }
    }

    AnswerRecord rec;
    rec.image_id = image.id;
    rec.question_id = question.id;
    rec.raw_answer = *raw;
    rec.mapped_value = mapped;
    return rec;
}

namespace {

fs::path image_path(const fs::path& out_dir, const BackendProfile& profile, const Prompt& prompt,
                    std::int64_t seed) {
    return out_dir / profile.model_name / prompt.concept_id / prompt.id /
           (std::to_string(seed) + ".png");
}

ImageRecord write_image(const fs::path& out_dir, const BackendProfile& profile,
                        const Prompt& prompt, std::int64_t seed, const std::string& bytes) {
    const fs::path path = image_path(out_dir, profile, prompt, seed);
    fs::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
    ImageRecord rec;
    rec.id = ImageRecord::make_id(profile.model_name, prompt.id, seed);
    rec.prompt_id = prompt.id;
    rec.model_id = profile.model_name;
    rec.seed = seed;
    rec.uri = path.string();
    rec.content_hash = sha256_hex(bytes);
    return rec;
}

std::vector<ImageRecord> pair_directory_images(Backend& backend, const Prompt& prompt, int n,
                                               std::int64_t base_seed) {
    const fs::path dir = backend.profile().endpoint;
    const fs::path manifest = dir / "manifest.jsonl";
    if (!fs::exists(manifest)) {
        throw BackendError(BackendError::Kind::config,
                           "directory backend has no manifest: " + manifest.string(), false);
    }
    std::vector<std::string> files;
    for_each_line(manifest, [&](std::string_view line, std::size_t lineno) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(manifest.string() + ":" + std::to_string(lineno) + ": " +
                                  e.what());
        }
        if (j.at("prompt_id").get<std::string>() == prompt.id) {
            files.push_back(j.at("file").get<std::string>());
        }
    });
    if (static_cast<int>(files.size()) < n) {
        throw BackendError(BackendError::Kind::shortfall,
                           "directory backend holds " + std::to_string(files.size()) +
                               " images for prompt " + prompt.id + " but " + std::to_string(n) +
                               " were requested (short by " +
                               std::to_string(n - static_cast<int>(files.size())) + ")",
                           false);
    }
    std::vector<ImageRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const fs::path path = dir / files[static_cast<std::size_t>(i)];
        const std::string bytes = read_file(path);
        ImageRecord rec;
        rec.seed = base_seed + i;
        rec.prompt_id = prompt.id;
        rec.model_id = backend.profile().model_name;
        rec.id = ImageRecord::make_id(rec.model_id, prompt.id, rec.seed);
        rec.uri = path.string();
        rec.content_hash = sha256_hex(bytes);
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace

std::vector<ImageRecord> generate_images(Backend& backend, const Prompt& prompt, int n,
                                         std::int64_t base_seed, const fs::path& out_dir) {
    if (backend.profile().role != BackendRole::t2i) {
        throw ValidationError("generate_images requires a backend with the t2i role");
    }
    if (n < 0) throw ValidationError("image count must be >= 0");

    if (backend.profile().kind == BackendKind::directory) {
        return pair_directory_images(backend, prompt, n, base_seed);
    }

    std::vector<ImageRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::int64_t seed = base_seed + i;
        std::string bytes;
        if (backend.profile().kind == BackendKind::mock) {
            // Deterministic stand-in image; the tag is what mock VQA fixtures
            // key on, so seeds cycle through a prompt's configured tags.
            const std::string tag = backend.fixtures()->tag_for(prompt.id, seed);
            bytes = "GRADEMOCKIMG\nmodel=" + backend.profile().model_name +
                    "\nprompt_id=" + prompt.id + "\nseed=" + std::to_string(seed) +
                    "\ntag=" + tag + "\n";
        } else {
            StructuredRequest req;
            req.prompt_text = prompt.text;
            req.extra = json{{"seed", seed}, {"n", 1}};
            const json response = backend.complete(req);
            if (!response.is_object() || !response.contains("image_b64")) {
                throw BackendError(BackendError::Kind::schema,
                                   "t2i response carries no image_b64 field", false);
            }
            bytes = base64_decode(response.at("image_b64").get<std::string>());
        }
        records.push_back(write_image(out_dir, backend.profile(), prompt, seed, bytes));
    }
    return records;
}

}  // namespace grade
