#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>

namespace fpdetect {

/// Public-suffix rule table (publicsuffix.org semantics: plain, wildcard
/// and exception rules, with the implicit "*" default). Hosts are matched
/// lowercase. The bundled snapshot keeps eTLD+1 extraction deterministic
/// across runs; pass a full dump via from_file() for production data.
class PublicSuffixList {
public:
    static PublicSuffixList parse(std::string_view text);
    static PublicSuffixList from_file(const std::filesystem::path& path);
    // Abridged snapshot compiled into the library (see src/psl_snapshot.cpp).
    static const PublicSuffixList& bundled();

    // Longest matching public suffix of host ("com" for "www.a.com").
    std::string public_suffix(std::string_view host) const;
    // eTLD+1. When the host itself is a public suffix, returns the host.
    std::string registrable_domain(std::string_view host) const;

    std::size_t rule_count() const { return rules_.size(); }

private:
    struct Rule {
        bool exception = false;
        int labels = 0;
    };
    // Keyed by rule text without any "!" prefix; wildcard labels kept as "*".
    std::unordered_map<std::string, Rule> rules_;
};

} // namespace fpdetect
