#include "fpdetect/psl.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "fpdetect/errors.hpp"
#include "fpdetect/text.hpp"

namespace fpdetect {

PublicSuffixList PublicSuffixList::parse(std::string_view text) {
    PublicSuffixList psl;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        pos = (eol == std::string_view::npos) ? text.size() + 1 : eol + 1;

        line = trim(line);
        if (line.empty() || line.starts_with("//")) continue;
        // A rule ends at the first whitespace per the PSL format.
        std::size_t ws = line.find_first_of(" \t");
        if (ws != std::string_view::npos) line = line.substr(0, ws);

        Rule rule;
        if (line.starts_with('!')) {
            rule.exception = true;
            line.remove_prefix(1);
        }
        if (line.empty()) continue;
        std::string key = to_lower_ascii(line);
        rule.labels = 1;
        for (char c : key)
            if (c == '.') ++rule.labels;
        psl.rules_[key] = rule;
    }
    return psl;
}

PublicSuffixList PublicSuffixList::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read public-suffix file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

namespace {

std::vector<std::string_view> host_labels(std::string_view host) {
    std::vector<std::string_view> labels;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= host.size(); ++i) {
        if (i == host.size() || host[i] == '.') {
            labels.push_back(host.substr(start, i - start));
            start = i + 1;
        }
    }
    return labels;
}

std::string join_tail(const std::vector<std::string_view>& labels, std::size_t count) {
    std::string out;
    for (std::size_t i = labels.size() - count; i < labels.size(); ++i) {
        if (!out.empty()) out += '.';
        out += labels[i];
    }
    return out;
}

} // namespace

std::string PublicSuffixList::public_suffix(std::string_view host_in) const {
    std::string host = to_lower_ascii(host_in);
    if (!host.empty() && host.back() == '.') host.pop_back();
    auto labels = host_labels(host);
    if (labels.size() <= 1) return host;

    // Exception rules beat everything; otherwise the match with the most
    // labels wins; the implicit default rule "*" matches one label.
    int best_normal = 1;
    int exception_labels = 0;
    for (std::size_t k = 1; k <= labels.size(); ++k) {
        std::string tail = join_tail(labels, k);
        auto it = rules_.find(tail);
        if (it != rules_.end()) {
            if (it->second.exception) {
                exception_labels = int(k);
            } else if (int(k) > best_normal) {
                best_normal = int(k);
            }
        }
        if (k >= 2) {
            // wildcard rule covering the k-label tail: "*.<k-1 tail labels>"
            std::string wild = "*." + join_tail(labels, k - 1);
            auto wit = rules_.find(wild);
            if (wit != rules_.end() && !wit->second.exception && int(k) > best_normal)
                best_normal = int(k);
        }
    }
    int suffix_labels = exception_labels > 0 ? exception_labels - 1 : best_normal;
    if (suffix_labels <= 0) suffix_labels = 1;
    if (suffix_labels > int(labels.size())) suffix_labels = int(labels.size());
    return join_tail(labels, std::size_t(suffix_labels));
}

std::string PublicSuffixList::registrable_domain(std::string_view host_in) const {
    std::string host = to_lower_ascii(host_in);
    if (!host.empty() && host.back() == '.') host.pop_back();
    std::string suffix = public_suffix(host);
    auto labels = host_labels(host);
    auto suffix_label_count = host_labels(suffix).size();
    if (labels.size() <= suffix_label_count) return host;
    return join_tail(labels, suffix_label_count + 1);
}

} // namespace fpdetect
