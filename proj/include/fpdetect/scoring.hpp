#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fpdetect/distance.hpp"
#include "fpdetect/labels.hpp"
#include "fpdetect/snippets.hpp"

namespace fpdetect {

/// c(x) per matrix row: how many kept labels lie within d (inclusive; a
/// labeled row counts itself).
std::vector<std::int64_t> neighbor_counts(const SnippetMatrix& matrix, const LabelSet& labels,
                                          double d, Metric metric, const ExecPolicy& policy = {});

/// d(r) = max c(x) over the script's snippets; scripts with no snippets
/// are absent.
std::map<std::string, std::int64_t> script_scores(const std::vector<std::int64_t>& counts,
                                                  const SnippetMatrix& matrix);

/// Scripts ordered by (score desc, URL asc); the deterministic ranking
/// every report is built on.
std::vector<std::pair<std::string, std::int64_t>> rank_scripts(
    const std::map<std::string, std::int64_t>& scores);

struct RankPoint {
    std::size_t rank = 0; // 1-based
    double precision = 0, recall = 0, f1 = 0;
};

struct RankCurve {
    std::vector<RankPoint> points;            // one per rank
    std::size_t reference_size = 0;
    std::vector<std::string> missing_reference; // reference scripts never scored
};

RankCurve rank_and_curves(const std::vector<std::pair<std::string, std::int64_t>>& ranking,
                          const std::vector<std::string>& reference);

/// Recall against a reference sub-list at each distinct score cutoff
/// (score, recall of scripts scoring >= score), descending by score.
std::vector<std::pair<std::int64_t, double>> recall_by_score(
    const std::vector<std::pair<std::string, std::int64_t>>& ranking,
    const std::vector<std::string>& sublist);

// F1 at ranks below this is plotted but ignored during threshold
// selection; the criterion is unstable at low ranks.
inline constexpr std::size_t kDefaultMinRankForF1 = 50;

double best_f1(const RankCurve& curve, std::size_t min_rank = kDefaultMinRankForF1);

struct ThresholdCandidate {
    double d = 0;
    double best_f1 = 0;
    std::size_t labels_kept = 0;
    std::size_t labels_pruned = 0;
    RankCurve curve;
    std::vector<std::pair<std::uint32_t, double>> proximity; // per-label p(y) at this d
};

struct ThresholdSelection {
    double best_d = 0;
    std::size_t min_rank_used = 0;
    std::vector<ThresholdCandidate> candidates;
};

/// Evaluates every candidate distance threshold end to end: prune at d,
/// count, score, rank against the reference. Pruning re-runs per
/// candidate because label coverage depends on d. Best candidate is the
/// one with the highest max-over-rank F1 (ranks >= min_rank); ties go to
/// the smaller d.
ThresholdSelection select_distance_threshold(const SnippetMatrix& matrix,
                                             const LabelSet& unpruned_labels,
                                             const std::vector<double>& candidate_ds,
                                             const std::vector<std::string>& reference,
                                             double prune_threshold, Metric metric,
                                             const ExecPolicy& policy = {},
                                             std::size_t min_rank = kDefaultMinRankForF1);

} // namespace fpdetect
