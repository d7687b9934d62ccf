#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace grade {

// SHA-256 of the input bytes as a lowercase hex string.
std::string sha256_hex(std::string_view bytes);

std::string base64_encode(std::string_view bytes);
// Throws ValidationError on malformed input.
std::string base64_decode(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// trim + lowercase + collapse runs of internal whitespace to single spaces.
// This is the canonical form for concept names and attribute values.
std::string normalize_value(std::string_view s);

// Case-insensitive token containment: true when `token` (possibly multi-word)
// appears in `text` delimited by non-alphanumeric characters on both sides.
bool contains_token(std::string_view text, std::string_view token);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Write to a sibling temp file and rename into place. Rename is atomic on
// POSIX, so concurrent writers of identical content cannot tear each other.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Calls `fn` for every non-empty line. Line numbers are 1-based.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view line, std::size_t lineno)>& fn);

// "{a}" -> value substitution over a template string. Unknown placeholders
// are left untouched.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& subs);

// Fixed 4-decimal rendering used by report emitters ("0.4610").
std::string format_fixed4(double v);

// Compact rendering: fixed 4 decimals with trailing zeros (and a trailing
// dot) stripped, so 22.0 -> "22" and 10.5 -> "10.5".
std::string format_compact(double v);

}  // namespace grade
