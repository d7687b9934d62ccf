#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "grade/model.hpp"

namespace grade {

enum class BackendRole { llm, vqa, t2i };
enum class BackendKind { mock, http, directory };

const char* to_string(BackendRole role);
const char* to_string(BackendKind kind);
std::optional<BackendRole> backend_role_from(std::string_view s);
std::optional<BackendKind> backend_kind_from(std::string_view s);

struct BackendProfile {
    BackendRole role = BackendRole::llm;
    BackendKind kind = BackendKind::mock;
    // URL for http, fixture JSONL for mock, image directory for directory.
    std::string endpoint;
    std::string model_name;
    std::string auth_env;  // name of the env var holding the API key
    double temperature = 0.0;
    int max_tokens = 1000;
    double request_timeout_s = 60.0;
    int max_retries = 3;
    int batch_size = 1;
    double rate_limit_per_s = 0.0;  // 0 = unlimited
    std::string cache_dir;          // empty = caching off
    nlohmann::json params;          // opaque settings forwarded to http bodies

    void validate() const;  // throws ValidationError
};

nlohmann::json profile_to_json(const BackendProfile& p);
BackendProfile profile_from_json(const nlohmann::json& j, BackendRole role);

struct StructuredRequest {
    std::string prompt_text;
    std::string image_payload;             // raw image bytes, empty = none
    std::vector<std::string> enumerated;   // allowed answers, empty = free JSON
    // Strict mode rejects responses outside the enumerated set (llm_complete).
    // Non-strict keeps the enumeration in the wire request and the cache key
    // but defers mapping to the caller (vqa_answer).
    bool enum_strict = true;
    nlohmann::json extra;                  // merged into http bodies, hashed
};

// Content address of a request: sha256 over role, model_name, and the full
// serialized body, so any prompt-template or support edit invalidates caches.
std::string request_hash(const BackendProfile& profile, const StructuredRequest& req);

// Disk cache, laid out as <root>/<role>/<2-char hash prefix>/<hash>.json.
// Concurrent readers are fine; insertion is atomic per key via rename.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path root);

    std::optional<nlohmann::json> lookup(const std::string& role,
                                         const std::string& hash) const;
    void insert(const std::string& role, const std::string& hash,
                const nlohmann::json& response) const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path entry_path(const std::string& role, const std::string& hash) const;
    std::filesystem::path root_;
};

// Fixture table for the mock backend, one JSON object per line:
//   {"request_hash": "<hex>", "response": ...}      exact content match
//   {"contains": ["a", "b"], "response": ...}       all substrings must appear
//   {"map_from": "it is a circle", "map_to": "round"}   VQA answer mapping
//   {"tag_cycle": {"prompt_id": "p", "tags": ["round cookie", ...]}}
// Rules are tried in file order; the first match wins.
struct MockFixtures {
    struct Rule {
        std::string request_hash;
        std::vector<std::string> contains;
        nlohmann::json response;
    };

    std::vector<Rule> rules;
    std::map<std::string, std::string> answer_map;           // normalized from -> to
    std::map<std::string, std::vector<std::string>> tag_cycles;  // prompt_id -> tags

    static MockFixtures load(const std::filesystem::path& path);

    const nlohmann::json* match(const StructuredRequest& req, const std::string& hash) const;
    std::optional<std::string> map_answer(const std::string& normalized_raw) const;
    std::string tag_for(const std::string& prompt_id, std::int64_t seed) const;
};

// Token bucket. acquire() blocks until a slot is available.
class RateLimiter {
public:
    explicit RateLimiter(double per_second);
    void acquire();

private:
    double rate_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
};

// One configured backend: profile + transport + cache + rate limit. Safe for
// concurrent complete() calls.
class Backend {
public:
    explicit Backend(BackendProfile profile);

    // Resolves the request through the cache, then the transport with
    // retries; strict enumerated requests get one corrective retry with the
    // allowed set appended before failing hard. The validated response is
    // cached under the original request hash.
    nlohmann::json complete(const StructuredRequest& req);

    const BackendProfile& profile() const { return profile_; }
    const MockFixtures* fixtures() const { return fixtures_.get(); }
    const ResponseCache* cache() const { return cache_ ? &*cache_ : nullptr; }

    // complete() invocations, cache hits included.
    std::uint64_t requests_served() const { return requests_served_.load(); }
    // Calls that reached the transport (mock table or network).
    std::uint64_t transport_calls() const { return transport_calls_.load(); }
    std::uint64_t cache_hits() const { return cache_hits_.load(); }

private:
    nlohmann::json dispatch_with_retries(const StructuredRequest& req);
    nlohmann::json dispatch_once(const StructuredRequest& req);
    nlohmann::json mock_complete(const StructuredRequest& req);
    nlohmann::json http_complete(const StructuredRequest& req);

    BackendProfile profile_;
    std::unique_ptr<MockFixtures> fixtures_;
    std::optional<ResponseCache> cache_;
    std::unique_ptr<RateLimiter> limiter_;
    std::atomic<std::uint64_t> requests_served_{0};
    std::atomic<std::uint64_t> transport_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
};

// Extracts the single answer string from a structured response (a bare
// string, or an object carrying "mapped_value", "answer", or "raw_answer").
std::optional<std::string> response_answer(const nlohmann::json& response);

// ---------------------------------------------------------------------------
// Backend operations

// Structured completion against an LLM profile.
nlohmann::json llm_complete(Backend& backend, const StructuredRequest& req);

// One VQA answer for one (image, question), mapped into the support or the
// sentinel. The template may use {question} and {values} placeholders.
AnswerRecord vqa_answer(Backend& backend, const ImageRecord& image,
                        const AttributeQuestion& question, const SupportSet& support,
                        const std::string& prompt_template);

// Exactly n images with seeds base_seed .. base_seed+n-1. The mock and http
// kinds write image files under out_dir/<model>/<concept>/<prompt>/<seed>.png;
// the directory kind pairs pre-generated files from its manifest without
// generating and throws a shortfall error when fewer than n exist.
std::vector<ImageRecord> generate_images(Backend& backend, const Prompt& prompt, int n,
                                         std::int64_t base_seed,
                                         const std::filesystem::path& out_dir);

}  // namespace grade
