#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fpdetect/heuristics.hpp"
#include "fpdetect/records.hpp"

namespace fpdetect {

/// |A ∩ B| / |A ∪ B|, defined as 1 when both sets are empty.
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

enum class Collection {
    akam,
    hs,
    device_class,
    sadbundle,
    modernizr,
    charting,
    uncharacterized,
};
const char* collection_name(Collection c);

/// True iff the text contains "vibrate" with a full occurrence of
/// "globalCompositeOperation" inside the 500 characters immediately
/// preceding it. Content after a matched window never changes the result.
bool detect_device_class(std::string_view script_text);

struct CollectionConfig {
    // The characteristic modernizr value set: crawl user agent plus three
    // fixed sentinels. The UA varies per crawl, hence config.
    std::string modernizr_user_agent =
        "Mozilla/5.0 (X11; Linux x86_64; rv:52.0) Gecko/20100101 Firefox/52.0";

    std::set<std::string> modernizr_values() const {
        return {modernizr_user_agent, "{\"modernizr\":\"modernizr\"}", "{}", ""};
    }
};

/// Optional local corpus of retrieved script texts: a directory holding
/// an index.tsv of (clean_script_url, relative file name). The pipeline
/// never fetches scripts itself.
class ScriptTextCorpus {
public:
    static ScriptTextCorpus open(const std::filesystem::path& dir);
    std::optional<std::string> text_for(const std::string& clean_url) const;
    std::size_t size() const { return files_.size(); }

private:
    std::filesystem::path dir_;
    std::map<std::string, std::string> files_;
};

/// Distinct values observed in `set` operations, per clean script URL
/// (records with absent value columns contribute nothing).
std::map<std::string, std::set<std::string>> collect_set_values(
    const std::vector<CallRecord>& records);

/// Assigns each script exactly one collection tag. Precedence:
/// akam > hs > device_class > sadbundle > modernizr > charting >
/// uncharacterized, so fingerprinting collections are never masked by
/// benign ones. URL matching is case-sensitive over clean URLs.
std::map<std::string, Collection> tag_collections(
    const std::set<std::string>& scripts,
    const std::map<std::string, std::set<std::string>>& set_values,
    const ScriptTextCorpus* texts, const CollectionConfig& config);

struct CharacterizationRow {
    std::int64_t threshold = 0;
    std::size_t scripts_over = 0;
    double pct_of_dataset = 0;
    std::size_t in_reference = 0;
    double pct_of_reference = 0;
    std::map<Collection, std::size_t> collections; // among non-reference scripts
    std::size_t uncharacterized = 0;
};

struct CharacterizationTable {
    std::vector<CharacterizationRow> rows; // ascending by threshold
    std::size_t total_scripts = 0;
    std::size_t reference_size = 0;
};

CharacterizationTable characterize(
    const std::vector<std::pair<std::string, std::int64_t>>& ranking,
    const std::set<std::string>& reference, const std::map<std::string, Collection>& tags,
    std::vector<std::int64_t> thresholds);

struct ReviewCandidate {
    std::string script;
    std::int64_t score = 0;
    std::vector<std::string> snippet_keys;
};

/// Seeded uniform sample without replacement, deterministic for a given
/// (population, n, seed). Asking for more than the population returns the
/// whole population.
std::vector<ReviewCandidate> sample_for_review(std::vector<ReviewCandidate> population,
                                               std::size_t n, std::uint64_t seed);

struct VariantDiffRow {
    Technique technique;
    std::size_t en2016_count = 0;
    std::size_t das2018_count = 0;
    double jaccard = 1.0;
};

std::vector<VariantDiffRow> variant_diff(const std::vector<HeuristicFlag>& flags);

} // namespace fpdetect
