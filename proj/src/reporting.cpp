#include "fpdetect/reporting.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "fpdetect/errors.hpp"
#include "fpdetect/text.hpp"
#include "fpdetect/url.hpp"

namespace fpdetect {

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const std::string& x : a)
        if (b.count(x)) ++inter;
    std::size_t uni = a.size() + b.size() - inter;
    return double(inter) / double(uni);
}

const char* collection_name(Collection c) {
    switch (c) {
        case Collection::akam: return "akam";
        case Collection::hs: return "hs";
        case Collection::device_class: return "device_class";
        case Collection::sadbundle: return "sadbundle";
        case Collection::modernizr: return "modernizr";
        case Collection::charting: return "charting";
        case Collection::uncharacterized: return "uncharacterized";
    }
    return "?";
}

bool detect_device_class(std::string_view text) {
    static constexpr std::string_view kNeedle = "vibrate";
    static constexpr std::string_view kToken = "globalCompositeOperation";
    constexpr std::size_t kWindow = 500;

    std::size_t v = text.find(kNeedle);
    while (v != std::string_view::npos) {
        std::size_t begin = v >= kWindow ? v - kWindow : 0;
        std::string_view window = text.substr(begin, v - begin);
        if (window.find(kToken) != std::string_view::npos) return true;
        v = text.find(kNeedle, v + 1);
    }
    return false;
}

ScriptTextCorpus ScriptTextCorpus::open(const std::filesystem::path& dir) {
    ScriptTextCorpus corpus;
    corpus.dir_ = dir;
    std::ifstream in(dir / "index.tsv", std::ios::binary);
    if (!in) throw ConfigError("script text corpus has no index.tsv under " + dir.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split(line, '\t');
        if (f.size() != 2) throw DataError("bad corpus index row: " + line);
        corpus.files_[tsv_unescape(f[0])] = tsv_unescape(f[1]);
    }
    return corpus;
}

std::optional<std::string> ScriptTextCorpus::text_for(const std::string& clean_url) const {
    auto it = files_.find(clean_url);
    if (it == files_.end()) return std::nullopt;
    std::ifstream in(dir_ / it->second, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::map<std::string, std::set<std::string>> collect_set_values(
    const std::vector<CallRecord>& records) {
    std::map<std::string, std::set<std::string>> out;
    for (const CallRecord& r : records) {
        if (r.operation != Operation::set || !r.value || r.script_url.empty()) continue;
        out[clean_script_url(r.script_url)].insert(*r.value);
    }
    return out;
}

std::map<std::string, Collection> tag_collections(
    const std::set<std::string>& scripts,
    const std::map<std::string, std::set<std::string>>& set_values,
    const ScriptTextCorpus* texts, const CollectionConfig& config) {
    const std::set<std::string> modernizr_set = config.modernizr_values();

    std::map<std::string, Collection> tags;
    for (const std::string& script : scripts) {
        Collection tag = Collection::uncharacterized;
        if (script.find("/akam/") != std::string::npos) {
            tag = Collection::akam;
        } else if (script.find("hs-analytics") != std::string::npos) {
            tag = Collection::hs;
        } else if (std::optional<std::string> text =
                       texts ? texts->text_for(script) : std::nullopt;
                   text && detect_device_class(*text)) {
            tag = Collection::device_class;
        } else if (script.find("tpc.googlesyndication.com/sadbundle/") != std::string::npos) {
            tag = Collection::sadbundle;
        } else if (auto it = set_values.find(script);
                   it != set_values.end() && it->second == modernizr_set) {
            tag = Collection::modernizr;
        } else if (script.find("chart") != std::string::npos ||
                   script.find("jqplot") != std::string::npos) {
            tag = Collection::charting;
        }
        tags[script] = tag;
    }
    return tags;
}

CharacterizationTable characterize(
    const std::vector<std::pair<std::string, std::int64_t>>& ranking,
    const std::set<std::string>& reference, const std::map<std::string, Collection>& tags,
    std::vector<std::int64_t> thresholds) {
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    CharacterizationTable table;
    table.total_scripts = ranking.size();
    table.reference_size = reference.size();

    for (std::int64_t t : thresholds) {
        CharacterizationRow row;
        row.threshold = t;
        for (const auto& [script, score] : ranking) {
            if (score < t) continue;
            ++row.scripts_over;
            if (reference.count(script)) {
                ++row.in_reference;
                continue;
            }
            auto it = tags.find(script);
            Collection c = it == tags.end() ? Collection::uncharacterized : it->second;
            if (c == Collection::uncharacterized)
                ++row.uncharacterized;
            else
                ++row.collections[c];
        }
        row.pct_of_dataset =
            table.total_scripts ? double(row.scripts_over) / double(table.total_scripts) : 0.0;
        row.pct_of_reference =
            reference.empty() ? 0.0 : double(row.in_reference) / double(reference.size());
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::vector<ReviewCandidate> sample_for_review(std::vector<ReviewCandidate> population,
                                               std::size_t n, std::uint64_t seed) {
    // canonical order first so the draw depends only on content and seed
    std::sort(population.begin(), population.end(),
              [](const ReviewCandidate& a, const ReviewCandidate& b) {
                  return a.script < b.script;
              });
    if (n >= population.size()) return population;

    std::mt19937_64 rng(splitmix64(seed ^ 0x7265766965777321ULL)); // "review!"
    // partial Fisher-Yates: the first n slots become the sample
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, population.size() - 1);
        std::swap(population[i], population[pick(rng)]);
    }
    population.resize(n);
    std::sort(population.begin(), population.end(),
              [](const ReviewCandidate& a, const ReviewCandidate& b) {
                  return a.script < b.script;
              });
    return population;
}

std::vector<VariantDiffRow> variant_diff(const std::vector<HeuristicFlag>& flags) {
    std::map<Technique, std::pair<std::set<std::string>, std::set<std::string>>> per_technique;
    for (const HeuristicFlag& f : flags) {
        auto& [en, das] = per_technique[f.technique];
        std::string clean = clean_script_url(f.script_url);
        if (f.variant == HeuristicVariant::en2016)
            en.insert(clean);
        else
            das.insert(clean);
    }

    std::vector<VariantDiffRow> rows;
    for (Technique t : {Technique::canvas, Technique::canvas_font, Technique::webrtc,
                        Technique::audio}) {
        VariantDiffRow row;
        row.technique = t;
        auto it = per_technique.find(t);
        if (it != per_technique.end()) {
            row.en2016_count = it->second.first.size();
            row.das2018_count = it->second.second.size();
            row.jaccard = jaccard(it->second.first, it->second.second);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace fpdetect
