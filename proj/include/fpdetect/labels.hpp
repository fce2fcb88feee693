#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "fpdetect/distance.hpp"
#include "fpdetect/snippets.hpp"

namespace fpdetect {

enum class LabelProvenance { heuristic_list, keyword, external_file };
const char* provenance_name(LabelProvenance p);

/// Seed snippet rows, with pruning status. snippet_rows and pruned_rows
/// are disjoint once prune_labels has run.
struct LabelSet {
    std::vector<std::uint32_t> snippet_rows; // sorted, deduplicated
    LabelProvenance provenance = LabelProvenance::external_file;
    std::vector<std::uint32_t> pruned_rows; // sorted
    double prune_threshold = 0;
    double distance_threshold_used = 0;
};

/// Clean script URLs with at least one record whose raw script_url or
/// func_name contains the keyword (ASCII case-insensitive substring).
std::set<std::string> keyword_label(const std::vector<CallRecord>& records,
                                    const std::string& keyword, const GroupingOptions& grouping);

struct SnippetMapping {
    LabelSet labels;                  // unpruned
    std::vector<std::string> missing; // scripts absent from the matrix
};

/// Union of script_index rows over the input scripts.
SnippetMapping scripts_to_snippets(const std::set<std::string>& scripts,
                                   const SnippetMatrix& matrix, LabelProvenance provenance);

struct PruneResult {
    LabelSet labels; // snippet_rows = kept, pruned_rows = removed
    // p(y) per labeled row of the input set, input order: the proportion
    // of the dataset within distance_threshold of that label.
    std::vector<std::pair<std::uint32_t, double>> proximity;
};

/// Removes labels whose neighborhood at distance_threshold covers at
/// least prune_threshold of all snippets. The emitted proximity
/// distribution is what shows the characteristic bi-modal split.
PruneResult prune_labels(const SnippetMatrix& matrix, const LabelSet& labels,
                         double distance_threshold, double prune_threshold, Metric metric,
                         const ExecPolicy& policy = {});

/// Label list file: one clean script URL per line, '#' comments allowed.
std::set<std::string> read_label_file(const std::filesystem::path& path);

} // namespace fpdetect
