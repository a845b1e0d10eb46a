#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace codemem {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

using Clock = std::chrono::system_clock;
using TimePoint = Clock::time_point;

/// Lowercase, split on runs of non-alphanumeric ASCII. `__` therefore
/// separates service prefixes like any other punctuation.
std::set<std::string> word_tokens(std::string_view text);

std::string sha256_hex(std::string_view data);

/// 2*bytes lowercase hex characters from the OS entropy source.
std::string random_hex(std::size_t bytes);

std::string format_utc(TimePoint tp);
std::string utc_now_iso();

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDTHH:MM[:SS[.frac]]` with an optional
/// `Z` or `+HH:MM`/`-HH:MM` offset. Naive timestamps are read as UTC.
std::optional<TimePoint> parse_iso8601(std::string_view text);

/// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view bytes);

/// Count of UTF-8 code points (invalid bytes count as one each).
std::size_t codepoint_count(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

json read_json_file(const std::filesystem::path& path);

} // namespace codemem
