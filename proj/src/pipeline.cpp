#include "fpdetect/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fpdetect/errors.hpp"
#include "fpdetect/heuristics.hpp"
#include "fpdetect/labels.hpp"
#include "fpdetect/records.hpp"
#include "fpdetect/reporting.hpp"
#include "fpdetect/scoring.hpp"
#include "fpdetect/snippets.hpp"
#include "fpdetect/text.hpp"
#include "fpdetect/url.hpp"

namespace fs = std::filesystem;

namespace fpdetect {

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::ingest: return "ingest";
        case Stage::snippets: return "snippets";
        case Stage::label: return "label";
        case Stage::prune: return "prune";
        case Stage::score: return "score";
        case Stage::threshold_select: return "threshold_select";
        case Stage::report: return "report";
        case Stage::metric_delta: return "metric_delta";
        case Stage::variant_diff: return "variant_diff";
    }
    return "?";
}

std::optional<Stage> stage_from_name(std::string_view name) {
    for (Stage s : {Stage::ingest, Stage::snippets, Stage::label, Stage::prune, Stage::score,
                    Stage::threshold_select, Stage::report, Stage::metric_delta,
                    Stage::variant_diff})
        if (name == stage_name(s)) return s;
    return std::nullopt;
}

std::string PipelineConfig::serialize() const {
    nlohmann::json j;
    j["input"] = input.string();
    j["format"] = format;
    j["strip_www"] = strip_www;
    j["inline_policy"] = inline_policy;
    j["psl_file"] = psl_file ? nlohmann::json(psl_file->string()) : nlohmann::json();
    j["metric"] = metric;
    j["distance_thresholds"] = distance_thresholds;
    j["distance_threshold"] =
        distance_threshold ? nlohmann::json(*distance_threshold) : nlohmann::json();
    j["prune_threshold"] = prune_threshold;
    j["min_rank_f1"] = min_rank_f1;
    j["labels"] = labels;
    j["heuristic_variant"] = heuristic_variant;
    j["heuristic_config"] =
        heuristic_config ? nlohmann::json(heuristic_config->string()) : nlohmann::json();
    j["score_thresholds"] = score_thresholds;
    j["review_threshold"] =
        review_threshold ? nlohmann::json(*review_threshold) : nlohmann::json();
    j["review_sample"] = review_sample;
    j["reference_file"] =
        reference_file ? nlohmann::json(reference_file->string()) : nlohmann::json();
    j["script_texts"] = script_texts ? nlohmann::json(script_texts->string()) : nlohmann::json();
    j["modernizr_user_agent"] = modernizr_user_agent;
    j["metric_delta_bins"] = metric_delta_bins;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

Metric PipelineConfig::parsed_metric() const {
    auto m = metric_from_name(metric);
    if (!m) throw ConfigError("unknown metric: " + metric);
    return *m;
}

ExecPolicy PipelineConfig::exec_policy() const {
    ExecPolicy p;
    p.workers = workers;
    p.block_rows = block_rows;
    p.block_cols = block_cols;
    p.spill_dir = spill_dir;
    return p;
}

void PipelineConfig::validate() const {
    parsed_metric();
    if (format != "jsonl" && format != "csv" && format != "auto")
        throw ConfigError("--format must be jsonl, csv or auto, got: " + format);
    if (inline_policy != "skip" && inline_policy != "bucket")
        throw ConfigError("--inline must be skip or bucket, got: " + inline_policy);
    if (!(prune_threshold > 0) || prune_threshold > 1)
        throw ConfigError("--prune-threshold must be in (0, 1]");
    if (labels != "heuristic" && !labels.starts_with("keyword:") && !labels.starts_with("file:"))
        throw ConfigError("--labels must be heuristic, keyword:<word> or file:<path>");
    if (heuristic_variant != "en2016" && heuristic_variant != "das2018")
        throw ConfigError("--variant must be en2016 or das2018, got: " + heuristic_variant);
    for (double d : distance_thresholds)
        if (d < 0) throw ConfigError("distance thresholds must be >= 0");
    if (distance_threshold && *distance_threshold < 0)
        throw ConfigError("--distance-threshold must be >= 0");
    if (metric_delta_bins == 0) throw ConfigError("--bins must be >= 1");
}

void atomic_write_file(const fs::path& path, std::string_view content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(content.data(), std::streamsize(content.size()));
        if (!out) throw DataError("failed writing " + path.string());
    }
    fs::rename(tmp, path);
}

namespace {

// ---------------------------------------------------------------- helpers

void require_input(const fs::path& path, Stage produced_by) {
    if (!fs::exists(path))
        throw ConfigError("'" + path.string() + "' not found; run `fpdetect " +
                          stage_name(produced_by) + "` first");
}

std::uint64_t hash_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::uint64_t h = 14695981039346656037ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a64(std::string_view(buf, std::size_t(in.gcount())), h);
    return h;
}

std::uint64_t hash_dir(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 14695981039346656037ULL;
    for (const fs::path& f : files) {
        h = fnv1a64(f.lexically_relative(dir).generic_string(), h);
        h ^= hash_file(f);
        h = splitmix64(h);
    }
    return h;
}

struct GroupingContext {
    std::optional<PublicSuffixList> file_psl;
    bool strip_www = true;
    InlinePolicy policy = InlinePolicy::skip;

    GroupingOptions options() const {
        GroupingOptions o;
        o.strip_www = strip_www;
        o.inline_policy = policy;
        o.psl = file_psl ? &*file_psl : nullptr;
        return o;
    }
};

GroupingContext make_grouping(const PipelineConfig& cfg) {
    GroupingContext g;
    g.strip_www = cfg.strip_www;
    if (cfg.inline_policy == "skip")
        g.policy = InlinePolicy::skip;
    else if (cfg.inline_policy == "bucket")
        g.policy = InlinePolicy::bucket;
    else
        throw ConfigError("inline_policy must be 'skip' or 'bucket', got: " + cfg.inline_policy);
    if (cfg.psl_file) g.file_psl = PublicSuffixList::from_file(*cfg.psl_file);
    return g;
}

HeuristicConfig resolve_heuristics(const PipelineConfig& cfg) {
    return cfg.heuristic_config ? HeuristicConfig::from_file(*cfg.heuristic_config)
                                : HeuristicConfig::defaults();
}

struct LabelSpec {
    LabelProvenance provenance;
    std::string keyword;
    fs::path file;
};

LabelSpec parse_label_spec(const PipelineConfig& cfg) {
    const std::string& s = cfg.labels;
    if (s == "heuristic") return {LabelProvenance::heuristic_list, {}, {}};
    if (s.starts_with("keyword:")) {
        std::string word = s.substr(8);
        if (word.empty()) throw ConfigError("--labels keyword: requires a word");
        return {LabelProvenance::keyword, word, {}};
    }
    if (s.starts_with("file:")) {
        std::string path = s.substr(5);
        if (path.empty()) throw ConfigError("--labels file: requires a path");
        return {LabelProvenance::external_file, {}, fs::path(path)};
    }
    throw ConfigError("--labels must be heuristic, keyword:<word> or file:<path>, got: " + s);
}

std::vector<CallRecord> load_records(const PipelineConfig& cfg) {
    fs::path path = cfg.out / "ingest" / "records.tsv";
    require_input(path, Stage::ingest);
    std::ifstream in(path, std::ios::binary);
    std::vector<CallRecord> records;
    read_records_tsv(in, [&](CallRecord&& r) { records.push_back(std::move(r)); });
    return records;
}

SnippetMatrix load_matrix_checked(const PipelineConfig& cfg) {
    fs::path dir = cfg.out / "snippets" / "matrix";
    require_input(dir, Stage::snippets);
    return load_matrix(dir);
}

LabelSet load_label_set(const PipelineConfig& cfg) {
    fs::path rows_path = cfg.out / "label" / "label_rows.tsv";
    require_input(rows_path, Stage::label);

    LabelSet labels;
    {
        std::ifstream meta_in(cfg.out / "label" / "label_meta.json", std::ios::binary);
        if (meta_in) {
            nlohmann::json meta = nlohmann::json::parse(meta_in, nullptr, false);
            if (!meta.is_discarded()) {
                std::string p = meta.value("provenance", "external_file");
                if (p == "heuristic_list") labels.provenance = LabelProvenance::heuristic_list;
                else if (p == "keyword") labels.provenance = LabelProvenance::keyword;
                else labels.provenance = LabelProvenance::external_file;
            }
        }
    }
    std::ifstream in(rows_path, std::ios::binary);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto id = parse_int(line);
        if (!id || *id < 0) throw DataError("bad row id in label_rows.tsv: " + line);
        labels.snippet_rows.push_back(std::uint32_t(*id));
    }
    std::sort(labels.snippet_rows.begin(), labels.snippet_rows.end());
    return labels;
}

LabelSet load_pruned_label_set(const PipelineConfig& cfg) {
    fs::path kept_path = cfg.out / "prune" / "kept_rows.tsv";
    require_input(kept_path, Stage::prune);
    LabelSet labels = load_label_set(cfg);

    std::vector<std::uint32_t> kept;
    std::ifstream in(kept_path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto id = parse_int(line);
        if (!id || *id < 0) throw DataError("bad row id in kept_rows.tsv: " + line);
        kept.push_back(std::uint32_t(*id));
    }
    std::sort(kept.begin(), kept.end());

    LabelSet out;
    out.provenance = labels.provenance;
    out.snippet_rows = std::move(kept);
    std::set_difference(labels.snippet_rows.begin(), labels.snippet_rows.end(),
                        out.snippet_rows.begin(), out.snippet_rows.end(),
                        std::back_inserter(out.pruned_rows));
    return out;
}

struct Reference {
    std::vector<std::string> urls; // sorted
    std::map<std::string, std::set<Technique>> techniques; // empty for file references
};

Reference load_reference(const PipelineConfig& cfg) {
    Reference ref;
    if (cfg.reference_file) {
        auto urls = read_label_file(*cfg.reference_file);
        ref.urls.assign(urls.begin(), urls.end());
        if (ref.urls.empty())
            throw ConfigError("reference file has no entries: " + cfg.reference_file->string());
        return ref;
    }
    fs::path list = cfg.out / "label" / "heuristic_list.csv";
    if (!fs::exists(list))
        throw ConfigError(
            "no reference available: pass --reference <file> or run `fpdetect label` with "
            "--labels heuristic");
    std::ifstream in(list, std::ios::binary);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        std::string url = line.substr(0, comma);
        ref.urls.push_back(url);
        if (comma != std::string::npos) {
            for (const std::string& t : split(line.substr(comma + 1), ';'))
                if (auto tech = technique_from_name(t)) ref.techniques[url].insert(*tech);
        }
    }
    std::sort(ref.urls.begin(), ref.urls.end());
    if (ref.urls.empty()) throw ConfigError("heuristic reference list is empty");
    return ref;
}

double resolve_distance_threshold(const PipelineConfig& cfg) {
    if (cfg.distance_threshold) return *cfg.distance_threshold;
    fs::path thresholds = cfg.out / "threshold_select" / "thresholds.json";
    if (!fs::exists(thresholds))
        throw ConfigError(
            "no distance threshold: run `fpdetect threshold_select` first or pass "
            "--distance-threshold");
    std::ifstream in(thresholds, std::ios::binary);
    nlohmann::json j = nlohmann::json::parse(in);
    return j.at("selected_d").get<double>();
}

std::vector<std::pair<std::string, std::int64_t>> load_ranking(const PipelineConfig& cfg) {
    fs::path path = cfg.out / "score" / "scores.csv";
    require_input(path, Stage::score);
    std::ifstream in(path, std::ios::binary);
    std::string line;
    std::getline(in, line);
    std::vector<std::pair<std::string, std::int64_t>> ranking;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        // scores.csv fields never need quoting except the url; parse from the right
        auto last = line.rfind(',');
        auto prev = line.rfind(',', last - 1);
        auto score = parse_int(std::string_view(line).substr(prev + 1, last - prev - 1));
        if (!score) throw DataError("bad score in scores.csv: " + line);
        std::string url = line.substr(0, prev);
        if (url.size() >= 2 && url.front() == '"' && url.back() == '"') {
            std::string unq;
            for (std::size_t i = 1; i + 1 < url.size(); ++i) {
                if (url[i] == '"' && i + 2 < url.size() && url[i + 1] == '"') ++i;
                unq.push_back(url[i]);
            }
            url = unq;
        }
        ranking.emplace_back(url, *score);
    }
    return ranking;
}

void write_curve_tsv(const fs::path& path, const RankCurve& curve) {
    std::ostringstream out;
    out << "rank\tprecision\trecall\tf1\n";
    for (const RankPoint& p : curve.points)
        out << p.rank << '\t' << format_double(p.precision) << '\t' << format_double(p.recall)
            << '\t' << format_double(p.f1) << '\n';
    atomic_write_file(path, out.str());
}

void write_proximity_tsv(const fs::path& path,
                         const std::vector<std::pair<std::uint32_t, double>>& proximity) {
    std::ostringstream out;
    out << "row_id\tproportion\n";
    for (const auto& [row, p] : proximity) out << row << '\t' << format_double(p) << '\n';
    atomic_write_file(path, out.str());
}

// ---------------------------------------------------------------- stages

void stage_ingest(const PipelineConfig& cfg, const fs::path& dir) {
    InputFormat format;
    if (cfg.format == "jsonl") {
        format = InputFormat::jsonl;
    } else if (cfg.format == "csv") {
        format = InputFormat::csv;
    } else if (cfg.format == "auto") {
        format = cfg.input.extension() == ".csv" ? InputFormat::csv : InputFormat::jsonl;
    } else {
        throw ConfigError("--format must be jsonl, csv or auto, got: " + cfg.format);
    }

    std::ifstream in(cfg.input, std::ios::binary);
    if (!in) throw ConfigError("cannot read input: " + cfg.input.string());

    std::ofstream out(dir / "records.tsv", std::ios::binary);
    write_records_tsv_header(out);
    ParseStats stats =
        parse_call_records(in, format, [&](CallRecord&& r) { write_records_tsv(out, r); });
    if (!out) throw DataError("failed writing records.tsv");
    out.close();

    nlohmann::json j;
    j["total"] = stats.total;
    j["parsed"] = stats.parsed;
    j["skipped"] = stats.skipped;
    j["format"] = format == InputFormat::csv ? "csv" : "jsonl";
    atomic_write_file(dir / "stats.json", j.dump(2) + "\n");
}

void stage_snippets(const PipelineConfig& cfg, const fs::path& dir) {
    auto records = load_records(cfg);
    GroupingContext grouping = make_grouping(cfg);
    SnippetMatrix matrix = normalize_rows(build_snippet_matrix(records, grouping.options()));
    save_matrix(matrix, dir / "matrix");
}

void stage_label(const PipelineConfig& cfg, const fs::path& dir) {
    auto records = load_records(cfg);
    SnippetMatrix matrix = load_matrix_checked(cfg);
    GroupingContext grouping = make_grouping(cfg);
    LabelSpec spec = parse_label_spec(cfg);

    std::set<std::string> scripts;
    if (spec.provenance == LabelProvenance::heuristic_list) {
        auto variant = variant_from_name(cfg.heuristic_variant);
        if (!variant)
            throw ConfigError("--variant must be en2016 or das2018, got: " + cfg.heuristic_variant);
        HeuristicConfig hcfg = resolve_heuristics(cfg);
        HeuristicRunResult run = run_heuristics(records, hcfg, {*variant}, cfg.workers);

        auto compiled = compile_heuristic_list(run.flags);
        {
            std::ostringstream out;
            out << "clean_script_url,technique,variant\n";
            std::set<std::string> rows;
            for (const HeuristicFlag& f : run.flags)
                rows.insert(csv_quote(clean_script_url(f.script_url)) + "," +
                            technique_name(f.technique) + "," + variant_name(f.variant));
            for (const std::string& row : rows) out << row << '\n';
            atomic_write_file(dir / "labels.csv", out.str());
        }
        {
            std::ostringstream out;
            out << "clean_script_url,techniques\n";
            for (const auto& [url, techniques] : compiled) {
                std::string joined;
                for (Technique t : techniques) {
                    if (!joined.empty()) joined += ';';
                    joined += technique_name(t);
                }
                out << csv_quote(url) << ',' << joined << '\n';
            }
            atomic_write_file(dir / "heuristic_list.csv", out.str());
        }
        if (!run.not_evaluable.empty()) {
            std::ostringstream out;
            out << "clean_script_url,technique,variant\n";
            std::set<std::string> rows;
            for (const HeuristicFlag& f : run.not_evaluable)
                rows.insert(csv_quote(clean_script_url(f.script_url)) + "," +
                            technique_name(f.technique) + "," + variant_name(f.variant));
            for (const std::string& row : rows) out << row << '\n';
            atomic_write_file(dir / "not_evaluable.csv", out.str());
        }
        for (const auto& [url, _] : compiled) scripts.insert(url);
    } else if (spec.provenance == LabelProvenance::keyword) {
        scripts = keyword_label(records, spec.keyword, grouping.options());
        std::ostringstream out;
        for (const std::string& s : scripts) out << s << '\n';
        atomic_write_file(dir / "matched_scripts.txt", out.str());
    } else {
        scripts = read_label_file(spec.file);
    }

    SnippetMapping mapping = scripts_to_snippets(scripts, matrix, spec.provenance);
    {
        std::ostringstream out;
        out << "row_id\n";
        for (std::uint32_t r : mapping.labels.snippet_rows) out << r << '\n';
        atomic_write_file(dir / "label_rows.tsv", out.str());
    }
    {
        std::ostringstream out;
        for (const std::string& s : mapping.missing) out << s << '\n';
        atomic_write_file(dir / "missing_scripts.txt", out.str());
    }
    nlohmann::json meta;
    meta["provenance"] = provenance_name(spec.provenance);
    meta["scripts"] = scripts.size();
    meta["label_rows"] = mapping.labels.snippet_rows.size();
    meta["missing_scripts"] = mapping.missing.size();
    if (spec.provenance == LabelProvenance::keyword) meta["keyword"] = spec.keyword;
    atomic_write_file(dir / "label_meta.json", meta.dump(2) + "\n");
}

void stage_threshold_select(const PipelineConfig& cfg, const fs::path& dir) {
    SnippetMatrix matrix = load_matrix_checked(cfg);
    LabelSet labels = load_label_set(cfg);
    Reference ref = load_reference(cfg);

    ThresholdSelection selection = select_distance_threshold(
        matrix, labels, cfg.distance_thresholds, ref.urls, cfg.prune_threshold,
        cfg.parsed_metric(), cfg.exec_policy(), cfg.min_rank_f1);

    nlohmann::json j;
    j["selected_d"] = selection.best_d;
    j["min_rank"] = selection.min_rank_used;
    j["candidates"] = nlohmann::json::array();
    for (const ThresholdCandidate& c : selection.candidates) {
        j["candidates"].push_back({{"d", c.d},
                                   {"best_f1", c.best_f1},
                                   {"labels_kept", c.labels_kept},
                                   {"labels_pruned", c.labels_pruned}});
        write_curve_tsv(dir / ("curves_d" + format_double_compact(c.d) + ".tsv"), c.curve);
        write_proximity_tsv(dir / ("proximity_d" + format_double_compact(c.d) + ".tsv"),
                            c.proximity);
    }
    atomic_write_file(dir / "thresholds.json", j.dump(2) + "\n");
}

void stage_prune(const PipelineConfig& cfg, const fs::path& dir) {
    SnippetMatrix matrix = load_matrix_checked(cfg);
    LabelSet labels = load_label_set(cfg);
    double d = resolve_distance_threshold(cfg);

    PruneResult result =
        prune_labels(matrix, labels, d, cfg.prune_threshold, cfg.parsed_metric(),
                     cfg.exec_policy());
    if (labels.snippet_rows.empty())
        std::fprintf(stderr, "[prune] warning: empty label set, nothing to prune\n");

    {
        std::ostringstream out;
        out << "row_id\n";
        for (std::uint32_t r : result.labels.snippet_rows) out << r << '\n';
        atomic_write_file(dir / "kept_rows.tsv", out.str());
    }
    {
        std::ostringstream out;
        out << "row_id\n";
        for (std::uint32_t r : result.labels.pruned_rows) out << r << '\n';
        atomic_write_file(dir / "pruned_rows.tsv", out.str());
    }
    write_proximity_tsv(dir / "proximity.tsv", result.proximity);

    nlohmann::json meta;
    meta["distance_threshold"] = d;
    meta["prune_threshold"] = cfg.prune_threshold;
    meta["kept"] = result.labels.snippet_rows.size();
    meta["pruned"] = result.labels.pruned_rows.size();
    atomic_write_file(dir / "prune_meta.json", meta.dump(2) + "\n");
}

void stage_score(const PipelineConfig& cfg, const fs::path& dir) {
    SnippetMatrix matrix = load_matrix_checked(cfg);
    LabelSet labels = load_pruned_label_set(cfg);
    double d = resolve_distance_threshold(cfg);
    Reference ref = load_reference(cfg);

    auto counts = neighbor_counts(matrix, labels, d, cfg.parsed_metric(), cfg.exec_policy());
    auto scores = script_scores(counts, matrix);
    auto ranking = rank_scripts(scores);

    {
        std::ostringstream out;
        out << "row_id\tcount\n";
        for (std::size_t r = 0; r < counts.size(); ++r) out << r << '\t' << counts[r] << '\n';
        atomic_write_file(dir / "counts.tsv", out.str());
    }
    {
        std::ostringstream out;
        out << "clean_script_url,score,rank\n";
        for (std::size_t i = 0; i < ranking.size(); ++i)
            out << csv_quote(ranking[i].first) << ',' << ranking[i].second << ',' << i + 1
                << '\n';
        atomic_write_file(dir / "scores.csv", out.str());
    }

    RankCurve curve = rank_and_curves(ranking, ref.urls);
    write_curve_tsv(dir / "curves.tsv", curve);
    if (!curve.missing_reference.empty()) {
        std::ostringstream out;
        for (const std::string& s : curve.missing_reference) out << s << '\n';
        atomic_write_file(dir / "reference_never_scored.txt", out.str());
    }

    auto write_recall = [&](const std::string& name, const std::vector<std::string>& sub) {
        auto points = recall_by_score(ranking, sub);
        std::ostringstream out;
        out << "score\trecall\n";
        for (const auto& [score, recall] : points)
            out << score << '\t' << format_double(recall) << '\n';
        atomic_write_file(dir / ("recall_by_score_" + name + ".tsv"), out.str());
    };
    write_recall("all", ref.urls);
    if (!ref.techniques.empty()) {
        for (Technique t : {Technique::canvas, Technique::canvas_font, Technique::webrtc,
                            Technique::audio}) {
            std::vector<std::string> sub;
            for (const auto& [url, techniques] : ref.techniques)
                if (techniques.count(t)) sub.push_back(url);
            if (sub.empty()) continue;
            write_recall(technique_name(t), sub);
            write_curve_tsv(dir / ("curves_" + std::string(technique_name(t)) + ".tsv"),
                            rank_and_curves(ranking, sub));
        }
    }

    nlohmann::json meta;
    meta["distance_threshold"] = d;
    meta["metric"] = cfg.metric;
    meta["labels_used"] = labels.snippet_rows.size();
    meta["reference_size"] = ref.urls.size();
    meta["reference_never_scored"] = curve.missing_reference.size();
    atomic_write_file(dir / "score_meta.json", meta.dump(2) + "\n");
}

std::vector<std::int64_t> default_score_thresholds(
    const std::vector<std::pair<std::string, std::int64_t>>& ranking) {
    // score cutoffs at 1%, 2%, 5% and 10% of the ranking, deduplicated
    std::vector<std::int64_t> out;
    if (ranking.empty()) return {0};
    for (double pct : {0.01, 0.02, 0.05, 0.10}) {
        std::size_t rank = std::max<std::size_t>(1, std::size_t(double(ranking.size()) * pct));
        out.push_back(ranking[rank - 1].second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

void stage_report(const PipelineConfig& cfg, const fs::path& dir) {
    auto ranking = load_ranking(cfg);
    SnippetMatrix matrix = load_matrix_checked(cfg);
    auto records = load_records(cfg);
    Reference ref = load_reference(cfg);
    std::set<std::string> ref_set(ref.urls.begin(), ref.urls.end());

    std::optional<ScriptTextCorpus> corpus;
    if (cfg.script_texts) corpus = ScriptTextCorpus::open(*cfg.script_texts);
    else
        std::fprintf(stderr,
                     "[report] note: no --script-texts corpus, device_class tagging disabled\n");

    CollectionConfig collection_cfg;
    collection_cfg.modernizr_user_agent = cfg.modernizr_user_agent;
    auto set_values = collect_set_values(records);
    std::set<std::string> scripts;
    for (const auto& [url, _] : ranking) scripts.insert(url);
    auto tags = tag_collections(scripts, set_values, corpus ? &*corpus : nullptr, collection_cfg);

    {
        std::ostringstream out;
        out << "clean_script_url,score,collection\n";
        for (const auto& [url, score] : ranking)
            out << csv_quote(url) << ',' << score << ',' << collection_name(tags.at(url)) << '\n';
        atomic_write_file(dir / "tags.csv", out.str());
    }

    std::vector<std::int64_t> thresholds =
        cfg.score_thresholds.empty() ? default_score_thresholds(ranking) : cfg.score_thresholds;
    CharacterizationTable table = characterize(ranking, ref_set, tags, thresholds);

    {
        nlohmann::json j;
        j["total_scripts"] = table.total_scripts;
        j["reference_size"] = table.reference_size;
        j["rows"] = nlohmann::json::array();
        for (const CharacterizationRow& row : table.rows) {
            nlohmann::json r;
            r["threshold"] = row.threshold;
            r["scripts_over"] = row.scripts_over;
            r["pct_of_dataset"] = row.pct_of_dataset;
            r["in_reference"] = row.in_reference;
            r["pct_of_reference"] = row.pct_of_reference;
            for (const auto& [c, n] : row.collections) r["collections"][collection_name(c)] = n;
            r["uncharacterized"] = row.uncharacterized;
            j["rows"].push_back(r);
        }
        atomic_write_file(dir / "characterization.json", j.dump(2) + "\n");
    }
    {
        std::ostringstream md;
        md << "# Script characterization\n\n";
        md << table.total_scripts << " scored scripts, " << table.reference_size
           << " reference scripts.\n\n";
        md << "|  |";
        for (const auto& row : table.rows) md << " score >= " << row.threshold << " |";
        md << "\n|---|";
        for (std::size_t i = 0; i < table.rows.size(); ++i) md << "---|";
        md << '\n';
        auto line = [&](const std::string& name, auto getter) {
            md << "| " << name << " |";
            for (const auto& row : table.rows) md << ' ' << getter(row) << " |";
            md << '\n';
        };
        char buf[32];
        line("scripts over score", [](const auto& r) { return std::to_string(r.scripts_over); });
        line("% of dataset", [&](const auto& r) {
            std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r.pct_of_dataset);
            return std::string(buf);
        });
        line("in reference list", [](const auto& r) { return std::to_string(r.in_reference); });
        line("% of reference list", [&](const auto& r) {
            std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * r.pct_of_reference);
            return std::string(buf);
        });
        for (Collection c : {Collection::akam, Collection::hs, Collection::device_class,
                             Collection::sadbundle, Collection::modernizr, Collection::charting}) {
            line(collection_name(c), [c](const auto& r) {
                auto it = r.collections.find(c);
                return std::to_string(it == r.collections.end() ? 0 : it->second);
            });
        }
        line("uncharacterized", [](const auto& r) { return std::to_string(r.uncharacterized); });
        atomic_write_file(dir / "characterization.md", md.str());
    }

    // Review manifest: seeded sample of the uncharacterized scripts at the
    // review threshold (default: the score at the best-F1 rank).
    std::int64_t review_threshold;
    if (cfg.review_threshold) {
        review_threshold = *cfg.review_threshold;
    } else {
        RankCurve curve = rank_and_curves(ranking, ref.urls);
        double best = best_f1(curve, cfg.min_rank_f1);
        std::size_t best_rank = 1;
        std::size_t start = cfg.min_rank_f1 > 0 ? cfg.min_rank_f1 - 1 : 0;
        if (start >= curve.points.size()) start = 0;
        for (std::size_t k = start; k < curve.points.size(); ++k) {
            if (curve.points[k].f1 == best) {
                best_rank = curve.points[k].rank;
                break;
            }
        }
        review_threshold = ranking.empty() ? 0 : ranking[best_rank - 1].second;
    }

    std::vector<ReviewCandidate> population;
    for (const auto& [url, score] : ranking) {
        if (score < review_threshold || ref_set.count(url)) continue;
        if (tags.at(url) != Collection::uncharacterized) continue;
        ReviewCandidate c;
        c.script = url;
        c.score = score;
        if (auto it = matrix.script_index.find(url); it != matrix.script_index.end())
            for (std::uint32_t r : it->second) c.snippet_keys.push_back(matrix.keys[r].render());
        population.push_back(std::move(c));
    }
    auto manifest = sample_for_review(std::move(population), cfg.review_sample, cfg.seed);
    {
        std::ostringstream out;
        out << "clean_script_url,score,snippet_keys,fingerprinting,fingerprinting_type,tracking,"
               "benign_canvas\n";
        for (const ReviewCandidate& c : manifest) {
            std::string keys;
            for (const std::string& k : c.snippet_keys) {
                if (!keys.empty()) keys += ';';
                keys += k;
            }
            out << csv_quote(c.script) << ',' << c.score << ',' << csv_quote(keys) << ",,,,\n";
        }
        atomic_write_file(dir / "review_manifest.csv", out.str());
    }

    nlohmann::json meta;
    meta["review_threshold"] = review_threshold;
    meta["review_population"] = manifest.size();
    meta["device_class_enabled"] = bool(corpus);
    atomic_write_file(dir / "report_meta.json", meta.dump(2) + "\n");
}

void stage_metric_delta(const PipelineConfig& cfg, const fs::path& dir) {
    SnippetMatrix matrix = load_matrix_checked(cfg);
    LabelSet labels = load_label_set(cfg);
    if (labels.snippet_rows.size() < 2)
        throw DataError("metric_delta needs at least 2 labeled snippets");

    // negatives: seeded sample of the non-labeled rows, |negatives| = |positives|
    std::set<std::uint32_t> labeled(labels.snippet_rows.begin(), labels.snippet_rows.end());
    std::vector<std::uint32_t> pool;
    for (std::uint32_t r = 0; r < matrix.n; ++r)
        if (!labeled.count(r)) pool.push_back(r);
    if (pool.size() < 2) throw DataError("metric_delta needs at least 2 unlabeled snippets");

    std::mt19937_64 rng(splitmix64(cfg.seed ^ 0x64656c7461ULL)); // "delta"
    std::size_t take = std::min(pool.size(), labels.snippet_rows.size());
    take = std::max<std::size_t>(take, 2);
    for (std::size_t i = 0; i < take; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(take);
    std::sort(pool.begin(), pool.end());

    MetricDeltaCurve curve = metric_delta(matrix, labels.snippet_rows, pool, cfg.parsed_metric(),
                                          cfg.metric_delta_bins);
    std::ostringstream out;
    out << "bin_lo\tbin_hi\tdelta\n";
    for (std::size_t b = 0; b + 1 < curve.bin_edges.size(); ++b)
        out << format_double(curve.bin_edges[b]) << '\t' << format_double(curve.bin_edges[b + 1])
            << '\t' << format_double(curve.delta[b]) << '\n';
    atomic_write_file(dir / ("delta_" + cfg.metric + ".tsv"), out.str());

    nlohmann::json meta;
    meta["metric"] = cfg.metric;
    meta["bins"] = cfg.metric_delta_bins;
    meta["positives"] = labels.snippet_rows.size();
    meta["negatives"] = pool.size();
    atomic_write_file(dir / "metric_delta_meta.json", meta.dump(2) + "\n");
}

void stage_variant_diff(const PipelineConfig& cfg, const fs::path& dir) {
    auto records = load_records(cfg);
    HeuristicConfig hcfg = resolve_heuristics(cfg);
    HeuristicRunResult run = run_heuristics(
        records, hcfg, {HeuristicVariant::en2016, HeuristicVariant::das2018}, cfg.workers);

    auto rows = variant_diff(run.flags);
    {
        std::ostringstream out;
        out << "technique,en2016,das2018,jaccard\n";
        for (const VariantDiffRow& row : rows)
            out << technique_name(row.technique) << ',' << row.en2016_count << ','
                << row.das2018_count << ',' << format_double(row.jaccard) << '\n';
        atomic_write_file(dir / "variant_diff.csv", out.str());
    }
    {
        std::ostringstream out;
        out << "clean_script_url,technique,variant\n";
        std::set<std::string> lines;
        for (const HeuristicFlag& f : run.flags)
            lines.insert(csv_quote(clean_script_url(f.script_url)) + "," +
                         technique_name(f.technique) + "," + variant_name(f.variant));
        for (const std::string& line : lines) out << line << '\n';
        atomic_write_file(dir / "variant_flags.csv", out.str());
    }
}

// ------------------------------------------------------------ fingerprint

std::uint64_t stage_fingerprint(Stage stage, const PipelineConfig& cfg) {
    std::string acc = cfg.serialize();
    acc += stage_name(stage);
    acc += '\n';
    // artifacts under the output dir are recorded relative to it, so two
    // runs over the same inputs fingerprint identically wherever they live
    auto key_for = [&](const fs::path& p) {
        auto rel = p.lexically_relative(cfg.out);
        bool under_out = !rel.empty() && rel.generic_string().rfind("..", 0) != 0;
        return (under_out ? rel : p).generic_string();
    };
    auto add_file = [&](const fs::path& p) {
        acc += key_for(p) + "=" + std::to_string(hash_file(p)) + "\n";
    };
    auto add_dir = [&](const fs::path& p) {
        acc += key_for(p) + "=" + std::to_string(hash_dir(p)) + "\n";
    };
    const fs::path records = cfg.out / "ingest" / "records.tsv";
    const fs::path matrix = cfg.out / "snippets" / "matrix";
    const fs::path label_dir = cfg.out / "label";

    switch (stage) {
        case Stage::ingest:
            add_file(cfg.input);
            break;
        case Stage::snippets:
            require_input(records, Stage::ingest);
            add_file(records);
            if (cfg.psl_file) add_file(*cfg.psl_file);
            break;
        case Stage::label:
            require_input(records, Stage::ingest);
            require_input(matrix, Stage::snippets);
            add_file(records);
            add_dir(matrix);
            if (cfg.heuristic_config) add_file(*cfg.heuristic_config);
            if (cfg.labels.starts_with("file:")) add_file(fs::path(cfg.labels.substr(5)));
            break;
        case Stage::threshold_select:
            require_input(matrix, Stage::snippets);
            require_input(label_dir, Stage::label);
            add_dir(matrix);
            add_dir(label_dir);
            if (cfg.reference_file) add_file(*cfg.reference_file);
            break;
        case Stage::prune:
            require_input(matrix, Stage::snippets);
            require_input(label_dir, Stage::label);
            add_dir(matrix);
            add_dir(label_dir);
            acc += "d=" + format_double(resolve_distance_threshold(cfg)) + "\n";
            break;
        case Stage::score:
            require_input(matrix, Stage::snippets);
            require_input(cfg.out / "prune", Stage::prune);
            add_dir(matrix);
            add_dir(cfg.out / "prune");
            add_dir(label_dir);
            acc += "d=" + format_double(resolve_distance_threshold(cfg)) + "\n";
            if (cfg.reference_file) add_file(*cfg.reference_file);
            break;
        case Stage::report:
            require_input(cfg.out / "score", Stage::score);
            require_input(matrix, Stage::snippets);
            require_input(records, Stage::ingest);
            add_dir(cfg.out / "score");
            add_dir(matrix);
            add_file(records);
            if (cfg.reference_file) add_file(*cfg.reference_file);
            if (cfg.script_texts) add_dir(*cfg.script_texts);
            break;
        case Stage::metric_delta:
            require_input(matrix, Stage::snippets);
            require_input(label_dir, Stage::label);
            add_dir(matrix);
            add_dir(label_dir);
            break;
        case Stage::variant_diff:
            require_input(records, Stage::ingest);
            add_file(records);
            if (cfg.heuristic_config) add_file(*cfg.heuristic_config);
            break;
    }
    return fnv1a64(acc);
}

void dispatch_stage(Stage stage, const PipelineConfig& cfg, const fs::path& dir) {
    switch (stage) {
        case Stage::ingest: stage_ingest(cfg, dir); return;
        case Stage::snippets: stage_snippets(cfg, dir); return;
        case Stage::label: stage_label(cfg, dir); return;
        case Stage::prune: stage_prune(cfg, dir); return;
        case Stage::score: stage_score(cfg, dir); return;
        case Stage::threshold_select: stage_threshold_select(cfg, dir); return;
        case Stage::report: stage_report(cfg, dir); return;
        case Stage::metric_delta: stage_metric_delta(cfg, dir); return;
        case Stage::variant_diff: stage_variant_diff(cfg, dir); return;
    }
    throw InternalError("unknown stage");
}

} // namespace

StageOutcome run_stage(Stage stage, const PipelineConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError("--out directory is required");
    cfg.validate();
    fs::create_directories(cfg.out);
    atomic_write_file(cfg.out / "config.json", cfg.serialize());

    std::uint64_t fp = stage_fingerprint(stage, cfg);
    fs::path dir = cfg.out / stage_name(stage);
    fs::path meta_path = dir / "stage_meta.json";
    if (fs::exists(meta_path)) {
        std::ifstream in(meta_path, std::ios::binary);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.value("fingerprint", std::string{}) == std::to_string(fp))
            return {true, dir};
    }

    fs::path tmp = cfg.out / (std::string(".tmp-") + stage_name(stage));
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    dispatch_stage(stage, cfg, tmp);

    nlohmann::json meta;
    meta["stage"] = stage_name(stage);
    meta["fingerprint"] = std::to_string(fp);
    atomic_write_file(tmp / "stage_meta.json", meta.dump(2) + "\n");

    fs::remove_all(dir);
    fs::rename(tmp, dir);
    return {false, dir};
}

std::vector<Stage> default_pipeline(const PipelineConfig& cfg) {
    std::vector<Stage> stages = {Stage::ingest, Stage::snippets, Stage::label};
    if (!cfg.distance_threshold) stages.push_back(Stage::threshold_select);
    stages.push_back(Stage::prune);
    stages.push_back(Stage::score);
    stages.push_back(Stage::report);
    return stages;
}

} // namespace fpdetect
