#include "fpdetect/scoring.hpp"

#include <algorithm>
#include <set>

#include "fpdetect/errors.hpp"

namespace fpdetect {

std::vector<std::int64_t> neighbor_counts(const SnippetMatrix& matrix, const LabelSet& labels,
                                          double d, Metric metric, const ExecPolicy& policy) {
    if (d < 0) throw ConfigError("distance threshold must be >= 0");
    if (labels.snippet_rows.empty()) return std::vector<std::int64_t>(matrix.n, 0);
    DistanceEngine engine(matrix, labels.snippet_rows, metric, policy);
    return engine.count_labels_within(d);
}

std::map<std::string, std::int64_t> script_scores(const std::vector<std::int64_t>& counts,
                                                  const SnippetMatrix& matrix) {
    if (counts.size() != matrix.n)
        throw InternalError("script_scores: counts do not cover the matrix");
    std::map<std::string, std::int64_t> scores;
    for (const auto& [script, rows] : matrix.script_index) {
        std::int64_t best = 0;
        for (std::uint32_t r : rows) best = std::max(best, counts[r]);
        scores[script] = best;
    }
    return scores;
}

std::vector<std::pair<std::string, std::int64_t>> rank_scripts(
    const std::map<std::string, std::int64_t>& scores) {
    std::vector<std::pair<std::string, std::int64_t>> ranking(scores.begin(), scores.end());
    // map iteration is URL-ascending; stable sort keeps that as tie-break
    std::stable_sort(ranking.begin(), ranking.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return ranking;
}

RankCurve rank_and_curves(const std::vector<std::pair<std::string, std::int64_t>>& ranking,
                          const std::vector<std::string>& reference) {
    if (reference.empty()) throw ConfigError("rank_and_curves requires a non-empty reference");
    std::set<std::string> ref(reference.begin(), reference.end());

    RankCurve curve;
    curve.reference_size = ref.size();
    std::set<std::string> scored;
    for (const auto& [script, _] : ranking) scored.insert(script);
    for (const std::string& r : ref)
        if (!scored.count(r)) curve.missing_reference.push_back(r);

    std::size_t hits = 0;
    curve.points.reserve(ranking.size());
    for (std::size_t k = 0; k < ranking.size(); ++k) {
        if (ref.count(ranking[k].first)) ++hits;
        RankPoint p;
        p.rank = k + 1;
        p.precision = double(hits) / double(k + 1);
        p.recall = double(hits) / double(ref.size());
        p.f1 = (p.precision + p.recall) > 0
                   ? 2 * p.precision * p.recall / (p.precision + p.recall)
                   : 0.0;
        curve.points.push_back(p);
    }
    return curve;
}

std::vector<std::pair<std::int64_t, double>> recall_by_score(
    const std::vector<std::pair<std::string, std::int64_t>>& ranking,
    const std::vector<std::string>& sublist) {
    std::set<std::string> ref(sublist.begin(), sublist.end());
    std::vector<std::pair<std::int64_t, double>> out;
    if (ref.empty()) return out;

    std::size_t hits = 0;
    for (std::size_t k = 0; k < ranking.size(); ++k) {
        if (ref.count(ranking[k].first)) ++hits;
        bool last_of_score = (k + 1 == ranking.size()) ||
                             (ranking[k + 1].second != ranking[k].second);
        if (last_of_score)
            out.emplace_back(ranking[k].second, double(hits) / double(ref.size()));
    }
    return out;
}

double best_f1(const RankCurve& curve, std::size_t min_rank) {
    if (curve.points.empty()) return 0.0;
    std::size_t start = min_rank > 0 ? min_rank - 1 : 0;
    if (start >= curve.points.size()) start = 0; // short rankings use every rank
    double best = 0;
    for (std::size_t k = start; k < curve.points.size(); ++k)
        best = std::max(best, curve.points[k].f1);
    return best;
}

ThresholdSelection select_distance_threshold(const SnippetMatrix& matrix,
                                             const LabelSet& unpruned_labels,
                                             const std::vector<double>& candidate_ds,
                                             const std::vector<std::string>& reference,
                                             double prune_threshold, Metric metric,
                                             const ExecPolicy& policy, std::size_t min_rank) {
    if (candidate_ds.empty())
        throw ConfigError("select_distance_threshold requires at least one candidate");

    ThresholdSelection selection;
    selection.min_rank_used = min_rank;
    for (double d : candidate_ds) {
        ThresholdCandidate cand;
        cand.d = d;

        PruneResult pruned = prune_labels(matrix, unpruned_labels, d, prune_threshold, metric,
                                          policy);
        cand.labels_kept = pruned.labels.snippet_rows.size();
        cand.labels_pruned = pruned.labels.pruned_rows.size();
        cand.proximity = pruned.proximity;

        auto counts = neighbor_counts(matrix, pruned.labels, d, metric, policy);
        auto scores = script_scores(counts, matrix);
        cand.curve = rank_and_curves(rank_scripts(scores), reference);
        cand.best_f1 = best_f1(cand.curve, min_rank);
        selection.candidates.push_back(std::move(cand));
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i < selection.candidates.size(); ++i) {
        const auto& a = selection.candidates[i];
        const auto& b = selection.candidates[best];
        if (a.best_f1 > b.best_f1 || (a.best_f1 == b.best_f1 && a.d < b.d)) best = i;
    }
    selection.best_d = selection.candidates[best].d;
    return selection;
}

} // namespace fpdetect
