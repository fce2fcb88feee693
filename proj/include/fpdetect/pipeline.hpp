#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fpdetect/distance.hpp"

namespace fpdetect {

/// Everything that defines a run. Execution knobs (workers, block sizes)
/// steer scheduling only; they are excluded from the serialized config so
/// outputs stay byte-identical across worker counts.
struct PipelineConfig {
    std::filesystem::path input;
    std::string format = "auto"; // jsonl | csv | auto (by extension)

    bool strip_www = true;
    std::string inline_policy = "skip"; // skip | bucket
    std::optional<std::filesystem::path> psl_file;

    std::string metric = "chebyshev";
    std::vector<double> distance_thresholds = {0.05, 0.10, 0.15, 0.20, 0.25,
                                               0.30, 0.35, 0.40, 0.45, 0.50};
    std::optional<double> distance_threshold; // explicit single d
    double prune_threshold = 0.2;
    std::size_t min_rank_f1 = 50;

    std::string labels = "heuristic"; // heuristic | keyword:<word> | file:<path>
    std::string heuristic_variant = "das2018";
    std::optional<std::filesystem::path> heuristic_config;

    std::vector<std::int64_t> score_thresholds; // empty = derive from ranking
    std::optional<std::int64_t> review_threshold;
    std::size_t review_sample = 103;
    std::optional<std::filesystem::path> reference_file;
    std::optional<std::filesystem::path> script_texts;
    std::string modernizr_user_agent =
        "Mozilla/5.0 (X11; Linux x86_64; rv:52.0) Gecko/20100101 Firefox/52.0";
    std::size_t metric_delta_bins = 50;

    std::uint64_t seed = 0;
    std::filesystem::path out;

    // execution only; never serialized
    int workers = 0;
    std::size_t block_rows = 4096;
    std::size_t block_cols = 1024;
    std::optional<std::filesystem::path> spill_dir; // distance tile spill/resume

    std::string serialize() const; // canonical JSON
    Metric parsed_metric() const;
    ExecPolicy exec_policy() const;
    // Fails fast (ConfigError) on malformed enum-ish fields so a bad flag
    // never runs half a pipeline.
    void validate() const;
};

enum class Stage {
    ingest,
    snippets,
    label,
    prune,
    score,
    threshold_select,
    report,
    metric_delta,
    variant_diff,
};

const char* stage_name(Stage stage);
std::optional<Stage> stage_from_name(std::string_view name);

struct StageOutcome {
    bool up_to_date = false; // outputs already current; nothing rewritten
    std::filesystem::path dir;
};

/// Runs one stage against the config. Outputs land atomically under
/// <out>/<stage> (write-temp-then-rename); a completed stage with an
/// unchanged fingerprint (config + input bytes) is a no-op. Missing
/// prerequisites raise a ConfigError naming the stage to run first.
StageOutcome run_stage(Stage stage, const PipelineConfig& config);

/// The main chain for `all`: ingest through report. threshold_select is
/// skipped when an explicit --distance-threshold pins d.
std::vector<Stage> default_pipeline(const PipelineConfig& config);

// Single-file atomic write helper shared by stages and tools.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

} // namespace fpdetect
