#include "fpdetect/url.hpp"

#include <cctype>

#include "fpdetect/text.hpp"

namespace fpdetect {

namespace {

bool is_scheme_char(char c) {
    return std::isalnum((unsigned char)c) || c == '+' || c == '-' || c == '.';
}

// Matches "<alpha><scheme chars>*://" at the start of the string.
std::size_t scheme_prefix_len(std::string_view url) {
    if (url.empty() || !std::isalpha((unsigned char)url[0])) return 0;
    std::size_t i = 1;
    while (i < url.size() && is_scheme_char(url[i])) ++i;
    if (i + 2 < url.size() && url[i] == ':' && url[i + 1] == '/' && url[i + 2] == '/')
        return i + 3;
    return 0;
}

} // namespace

std::string clean_script_url(std::string_view url) {
    // Strip scheme prefixes until none remain, so cleaning stays
    // idempotent even for nested "https://https://x" junk.
    while (true) {
        std::size_t skip = scheme_prefix_len(url);
        if (skip == 0 && url.starts_with("//")) skip = 2; // protocol-relative
        if (skip == 0) break;
        url.remove_prefix(skip);
    }
    std::size_t cut = url.find_first_of("?#");
    if (cut != std::string_view::npos) url = url.substr(0, cut);
    return std::string(url);
}

std::string strip_www(std::string_view fqdn) {
    if (fqdn.size() > 4 && fqdn.substr(0, 4) == "www." )
        return std::string(fqdn.substr(4));
    return std::string(fqdn);
}

std::optional<UrlParts> url_parts(std::string_view url, const PublicSuffixList& psl) {
    std::string cleaned = clean_script_url(url);
    std::string_view rest = cleaned;

    std::size_t slash = rest.find('/');
    std::string_view authority = rest.substr(0, slash);
    std::string_view path = slash == std::string_view::npos ? std::string_view{} : rest.substr(slash);

    // authority = [userinfo@]host[:port]
    std::size_t at = authority.rfind('@');
    if (at != std::string_view::npos) authority = authority.substr(at + 1);
    std::string_view host = authority;
    if (host.starts_with('[')) {
        std::size_t close = host.find(']');
        if (close == std::string_view::npos) return std::nullopt;
        host = host.substr(1, close - 1);
    } else {
        std::size_t colon = host.rfind(':');
        if (colon != std::string_view::npos) {
            std::string_view port = host.substr(colon + 1);
            bool numeric = !port.empty();
            for (char c : port)
                if (!std::isdigit((unsigned char)c)) numeric = false;
            if (numeric) host = host.substr(0, colon);
        }
    }

    if (host.empty()) return std::nullopt;
    bool has_alnum = false;
    for (char c : host) {
        if (std::isspace((unsigned char)c) || c == '/' || c == '\\') return std::nullopt;
        if (std::isalnum((unsigned char)c)) has_alnum = true;
    }
    if (!has_alnum) return std::nullopt;

    UrlParts parts;
    parts.fqdn = to_lower_ascii(host);
    while (!parts.fqdn.empty() && parts.fqdn.back() == '.') parts.fqdn.pop_back();
    if (parts.fqdn.empty()) return std::nullopt;
    parts.etld1 = psl.registrable_domain(parts.fqdn);

    std::size_t last = path.rfind('/');
    parts.path_end = last == std::string_view::npos ? std::string{}
                                                    : std::string(path.substr(last + 1));
    return parts;
}

} // namespace fpdetect
