#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fpdetect/psl.hpp"
#include "fpdetect/records.hpp"
#include "fpdetect/url.hpp"

namespace fpdetect {

/// Grouping identity of one snippet: script-domain || script-file || function.
struct SnippetKey {
    std::string domain; // fqdn of script_url after www-strip
    std::string file;   // final path segment of script_url
    std::string func;   // func_name, "" for anonymous functions

    // Lossless rendered form "domain||file||func"; literal '|' in a
    // component is escaped so the separator never collides.
    std::string render() const;
    static std::optional<SnippetKey> parse(std::string_view rendered);

    auto operator<=>(const SnippetKey&) const = default;
};

enum class InlinePolicy { skip, bucket };

struct GroupingOptions {
    bool strip_www = true;
    InlinePolicy inline_policy = InlinePolicy::skip;
    const PublicSuffixList* psl = nullptr; // defaults to the bundled snapshot
};

/// Grouping key for one record, or nullopt when the record cannot be
/// grouped (inline script with skip policy, or unparseable host).
/// Also yields the clean script URL the snippet is attributed to
/// ("inline@<location-fqdn>" for bucketed inline scripts).
struct KeyedRecord {
    SnippetKey key;
    std::string clean_url;
};
std::optional<KeyedRecord> snippet_key(const CallRecord& record, const GroupingOptions& options);

struct GroupingStats {
    std::uint64_t keyable = 0;
    std::uint64_t skipped_inline = 0;
    std::uint64_t skipped_bad_host = 0;
};

/// Immutable n x s matrix of per-snippet symbol counts, sparse row-major.
/// Raw state holds integer call counts; normalized state holds each row
/// scaled to sum 1. Row order is lexicographic by rendered key so ids are
/// reproducible across runs; appended rows extend, never reorder.
struct SnippetMatrix {
    std::size_t n = 0; // snippet rows
    std::size_t s = 0; // vocabulary size

    std::vector<std::string> vocabulary;            // symbol id -> symbol
    std::vector<SnippetKey> keys;                   // row id -> key
    std::vector<std::size_t> row_ptr;               // n + 1 offsets
    std::vector<std::uint32_t> cols;                // symbol ids, ascending per row
    std::vector<std::int64_t> counts;               // raw state
    std::vector<double> values;                     // normalized state
    bool normalized = false;
    std::map<std::string, std::vector<std::uint32_t>> script_index; // S(r), sorted rows

    GroupingStats grouping_stats;

    std::size_t nnz() const { return cols.size(); }
    std::size_t row_size(std::size_t row) const { return row_ptr[row + 1] - row_ptr[row]; }
};

/// Tallies records into a raw-count matrix. Empty input yields n = 0.
SnippetMatrix build_snippet_matrix(const std::vector<CallRecord>& records,
                                   const GroupingOptions& options);

/// Divides each row by its row sum. Aborts (InternalError) on a zero row,
/// which build_snippet_matrix cannot produce.
SnippetMatrix normalize_rows(SnippetMatrix matrix);

struct AppendOptions {
    GroupingOptions grouping;
    // Re-observing an existing key is rejected unless set; then the new
    // row's func gets a "~<k>" suffix instead of merging post-normalization.
    bool allow_duplicate_keys = false;
};

/// Adds new snippets to a normalized matrix. Existing rows, ids and the
/// vocabulary prefix are byte-identical in the result; new symbols get
/// fresh ids, new rows are normalized independently.
SnippetMatrix append_rows(const SnippetMatrix& matrix, const std::vector<CallRecord>& new_records,
                          const AppendOptions& options);

// Directory persistence: vocabulary.tsv, keys.tsv, matrix.tsv, meta.json.
// All downstream stages can resume from a saved directory.
void save_matrix(const SnippetMatrix& matrix, const std::filesystem::path& dir);
SnippetMatrix load_matrix(const std::filesystem::path& dir);

} // namespace fpdetect
