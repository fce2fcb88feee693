#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fpdetect {

std::string to_lower_ascii(std::string_view s);
bool icontains(std::string_view haystack, std::string_view needle);
std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// Unicode code point count; each invalid byte counts as one point.
std::size_t utf8_length(std::string_view s);
// Drops every non-ASCII byte (for valid UTF-8, every non-ASCII code point).
std::string ascii_only(std::string_view s);

// Round-trippable decimal rendering of a double (17 significant digits).
std::string format_double(double v);
// Shortest decimal that round-trips (for filenames and human output).
std::string format_double_compact(double v);
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

// TSV field escaping. Escapes backslash, tab, CR and LF; the unescaped
// two-character sequence \N is reserved for "absent" (see records.cpp).
std::string tsv_escape(std::string_view field);
std::string tsv_unescape(std::string_view field);

// CSV (RFC 4180 style) field quoting for report outputs.
std::string csv_quote(std::string_view field);

std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t seed = 14695981039346656037ULL);
std::uint64_t splitmix64(std::uint64_t x);

} // namespace fpdetect
