#include "fpdetect/labels.hpp"

#include <algorithm>
#include <fstream>

#include "fpdetect/errors.hpp"
#include "fpdetect/text.hpp"
#include "fpdetect/url.hpp"

namespace fpdetect {

const char* provenance_name(LabelProvenance p) {
    switch (p) {
        case LabelProvenance::heuristic_list: return "heuristic_list";
        case LabelProvenance::keyword: return "keyword";
        case LabelProvenance::external_file: return "external_file";
    }
    return "?";
}

std::set<std::string> keyword_label(const std::vector<CallRecord>& records,
                                    const std::string& keyword, const GroupingOptions& grouping) {
    if (keyword.empty()) throw ConfigError("keyword_label requires a non-empty keyword");
    std::set<std::string> out;
    for (const CallRecord& r : records) {
        if (!icontains(r.script_url, keyword) && !icontains(r.func_name, keyword)) continue;
        if (auto keyed = snippet_key(r, grouping)) out.insert(keyed->clean_url);
    }
    return out;
}

SnippetMapping scripts_to_snippets(const std::set<std::string>& scripts,
                                   const SnippetMatrix& matrix, LabelProvenance provenance) {
    SnippetMapping mapping;
    mapping.labels.provenance = provenance;
    for (const std::string& script : scripts) {
        auto it = matrix.script_index.find(script);
        if (it == matrix.script_index.end()) {
            mapping.missing.push_back(script);
            continue;
        }
        mapping.labels.snippet_rows.insert(mapping.labels.snippet_rows.end(), it->second.begin(),
                                           it->second.end());
    }
    auto& rows = mapping.labels.snippet_rows;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return mapping;
}

PruneResult prune_labels(const SnippetMatrix& matrix, const LabelSet& labels,
                         double distance_threshold, double prune_threshold, Metric metric,
                         const ExecPolicy& policy) {
    if (!(prune_threshold > 0) || prune_threshold > 1)
        throw ConfigError("prune_threshold must be in (0, 1]");
    if (distance_threshold < 0) throw ConfigError("distance threshold must be >= 0");

    PruneResult result;
    result.labels.provenance = labels.provenance;
    result.labels.prune_threshold = prune_threshold;
    result.labels.distance_threshold_used = distance_threshold;
    if (labels.snippet_rows.empty() || matrix.n == 0) return result;

    DistanceEngine engine(matrix, labels.snippet_rows, metric, policy);
    std::vector<std::int64_t> near = engine.count_rows_within(distance_threshold);

    for (std::size_t i = 0; i < labels.snippet_rows.size(); ++i) {
        double p = double(near[i]) / double(matrix.n);
        result.proximity.emplace_back(labels.snippet_rows[i], p);
        if (p >= prune_threshold)
            result.labels.pruned_rows.push_back(labels.snippet_rows[i]);
        else
            result.labels.snippet_rows.push_back(labels.snippet_rows[i]);
    }
    return result;
}

std::set<std::string> read_label_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read label file: " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        std::string url(trim(line));
        if (url.empty()) continue;
        out.insert(clean_script_url(url));
    }
    return out;
}

} // namespace fpdetect
