#include <chrono>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fpdetect/errors.hpp"
#include "fpdetect/pipeline.hpp"

using namespace fpdetect;

namespace {

int run(int argc, char** argv) {
    CLI::App app{
        "fpdetect — ranks scripts from JS-API call logs by similarity to known "
        "fingerprinting snippets"};
    app.require_subcommand(1);
    app.fallthrough(false);

    PipelineConfig cfg;
    std::string input, out, psl_file, heuristic_config, reference, script_texts, spill_dir;
    double distance_threshold = -1;
    std::int64_t review_threshold = -1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--input", input, "crawl export (jsonl or csv)");
        cmd->add_option("--format", cfg.format, "jsonl | csv | auto")->capture_default_str();
        cmd->add_option("--out", out, "output directory")->required();
        cmd->add_option("--metric", cfg.metric, "chebyshev | euclidean | cityblock | cosine | jaccard")
            ->capture_default_str();
        cmd->add_option("--distance-thresholds", cfg.distance_thresholds,
                        "candidate distance thresholds")
            ->delimiter(',');
        cmd->add_option("--distance-threshold", distance_threshold,
                        "pin a single distance threshold (skips selection)");
        cmd->add_option("--prune-threshold", cfg.prune_threshold,
                        "label pruning proportion in (0,1]")
            ->capture_default_str();
        cmd->add_option("--labels", cfg.labels, "heuristic | keyword:<word> | file:<path>")
            ->capture_default_str();
        cmd->add_option("--variant", cfg.heuristic_variant, "en2016 | das2018")
            ->capture_default_str();
        cmd->add_option("--heuristic-config", heuristic_config,
                        "symbol table JSON (default: built-in tables)");
        cmd->add_option("--score-thresholds", cfg.score_thresholds,
                        "characterization score cutoffs")
            ->delimiter(',');
        cmd->add_option("--reference", reference, "reference script list file");
        cmd->add_option("--script-texts", script_texts,
                        "directory of retrieved script texts (index.tsv inside)");
        cmd->add_option("--modernizr-ua", cfg.modernizr_user_agent,
                        "crawl user-agent for the modernizr value set");
        cmd->add_option("--review-threshold", review_threshold,
                        "score cutoff for the review sample (default: best-F1 rank score)");
        cmd->add_option("--review-sample", cfg.review_sample, "review sample size")
            ->capture_default_str();
        cmd->add_option("--min-rank-f1", cfg.min_rank_f1,
                        "ignore ranks below this during threshold selection")
            ->capture_default_str();
        cmd->add_option("--bins", cfg.metric_delta_bins, "metric-delta histogram bins")
            ->capture_default_str();
        cmd->add_option("--psl-file", psl_file, "public-suffix list dump (default: bundled)");
        cmd->add_flag("--www-strip,!--no-www-strip", cfg.strip_www,
                      "strip one leading www. label when grouping")
            ->capture_default_str();
        cmd->add_option("--inline", cfg.inline_policy, "inline scripts: skip | bucket")
            ->capture_default_str();
        cmd->add_option("--block-rows", cfg.block_rows, "distance tile rows")
            ->capture_default_str();
        cmd->add_option("--block-cols", cfg.block_cols, "distance tile label columns")
            ->capture_default_str();
        cmd->add_option("--workers", cfg.workers, "worker threads (0 = all cores)")
            ->capture_default_str();
        cmd->add_option("--spill-dir", spill_dir,
                        "spill distance tiles here and resume from them");
        cmd->add_option("--seed", cfg.seed, "seed for all sampling")->capture_default_str();
    };

    std::vector<std::pair<CLI::App*, std::vector<Stage>>> plans;
    for (Stage s : {Stage::ingest, Stage::snippets, Stage::label, Stage::threshold_select,
                    Stage::prune, Stage::score, Stage::report, Stage::metric_delta,
                    Stage::variant_diff}) {
        CLI::App* cmd = app.add_subcommand(stage_name(s), std::string("run the ") +
                                                              stage_name(s) + " stage");
        add_common(cmd);
        plans.emplace_back(cmd, std::vector<Stage>{s});
    }
    {
        CLI::App* cmd = app.add_subcommand("all", "run the full pipeline (ingest .. report)");
        add_common(cmd);
        plans.emplace_back(cmd, std::vector<Stage>{});
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    cfg.input = input;
    cfg.out = out;
    if (!psl_file.empty()) cfg.psl_file = psl_file;
    if (!heuristic_config.empty()) cfg.heuristic_config = heuristic_config;
    if (!reference.empty()) cfg.reference_file = reference;
    if (!script_texts.empty()) cfg.script_texts = script_texts;
    if (distance_threshold >= 0) cfg.distance_threshold = distance_threshold;
    if (!spill_dir.empty()) cfg.spill_dir = spill_dir;
    if (review_threshold >= 0) cfg.review_threshold = review_threshold;

    for (auto& [cmd, stages] : plans) {
        if (!cmd->parsed()) continue;
        if (stages.empty()) stages = default_pipeline(cfg);
        for (Stage s : stages) {
            auto start = std::chrono::steady_clock::now();
            StageOutcome outcome = run_stage(s, cfg);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                              .count();
            if (outcome.up_to_date)
                std::fprintf(stderr, "[%s] up to date (%s)\n", stage_name(s),
                             outcome.dir.string().c_str());
            else
                std::fprintf(stderr, "[%s] done in %.2fs -> %s\n", stage_name(s), secs,
                             outcome.dir.string().c_str());
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const InternalError& e) {
        std::fprintf(stderr, "internal invariant violation: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 3;
    }
}
