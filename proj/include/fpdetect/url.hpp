#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "fpdetect/psl.hpp"

namespace fpdetect {

/// Script URL with scheme, query string and fragment removed.
/// "https://b.com/a/x.js?q=1#f" and "http://b.com/a/x.js?q=2" both clean
/// to "b.com/a/x.js". Cleaning is idempotent and total over non-empty
/// strings; no percent-decoding and no case folding of paths.
std::string clean_script_url(std::string_view url);

struct UrlParts {
    std::string fqdn;     // host of the cleaned URL, lowercased
    std::string etld1;    // registrable domain of fqdn
    std::string path_end; // final path segment, "" for "a.com/" or "a.com"
};

/// Splits a (possibly uncleaned) URL into host-derived parts. Returns
/// nullopt when no parseable host remains after cleaning (e.g. empty or
/// whitespace-only URLs); callers decide whether to skip or bucket.
std::optional<UrlParts> url_parts(std::string_view url, const PublicSuffixList& psl);

/// Drops one leading "www." label, the grouping convention for mirrored
/// hosts ("www.alaskaair.com" -> "alaskaair.com").
std::string strip_www(std::string_view fqdn);

} // namespace fpdetect
