#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fpdetect/snippets.hpp"

namespace fpdetect {

enum class Metric { chebyshev, euclidean, cityblock, cosine, jaccard };

const char* metric_name(Metric m);
std::optional<Metric> metric_from_name(std::string_view name);
// chebyshev/euclidean/cityblock have a label-side blocked formulation;
// cosine and jaccard run through the generic per-pair path, which is an
// order of magnitude slower on the same tiles.
bool metric_has_fast_path(Metric m);

struct ExecPolicy {
    int workers = 0; // 0 = OpenMP default
    std::size_t block_rows = 4096;
    std::size_t block_cols = 1024;
    // When set, every computed tile is written here and existing valid
    // tile files are loaded instead of recomputed (resume support).
    std::optional<std::filesystem::path> spill_dir;
};

/// One dense tile of the (snippet x label) distance matrix.
struct DistanceBlock {
    std::uint32_t row_begin = 0, row_end = 0;
    std::uint32_t col_begin = 0, col_end = 0;
    Metric metric = Metric::chebyshev;
    std::vector<double> values; // (row_end-row_begin) x (col_end-col_begin), row-major

    double at(std::uint32_t row, std::uint32_t col) const {
        return values[std::size_t(row - row_begin) * (col_end - col_begin) + (col - col_begin)];
    }
};

/// Distance between two sparse vectors over a shared vocabulary; column
/// ids must be ascending. Union-of-support two-pointer merge.
double pair_distance(std::span<const std::uint32_t> x_cols, std::span<const double> x_vals,
                     std::span<const std::uint32_t> y_cols, std::span<const double> y_vals,
                     Metric metric);

/// Blocked pairwise distances between matrix rows and a fixed label row
/// set. Tiles are independent; results are bit-identical for any block
/// size or worker count because each pair is always evaluated by the same
/// scalar routine. The sink may be called from multiple threads.
class DistanceEngine {
public:
    DistanceEngine(const SnippetMatrix& matrix, std::vector<std::uint32_t> label_rows,
                   Metric metric, ExecPolicy policy = {});

    void for_each_tile(const std::function<void(const DistanceBlock&)>& sink) const;

    /// c-side reduction: for every matrix row, how many labels lie within
    /// distance d (inclusive).
    std::vector<std::int64_t> count_labels_within(double d) const;

    /// prune-side reduction: for every label, how many matrix rows lie
    /// within distance d (inclusive), the label's own row included.
    std::vector<std::int64_t> count_rows_within(double d) const;

    const std::vector<std::uint32_t>& label_rows() const { return label_rows_; }

private:
    template <typename PairVisitor>
    void visit_tiles(PairVisitor&& visit) const;

    const SnippetMatrix& matrix_;
    std::vector<std::uint32_t> label_rows_;
    Metric metric_;
    ExecPolicy policy_;
};

/// Convenience single-call form for tests and small workloads; X and Y
/// must share one vocabulary (fatal DataError otherwise).
std::vector<double> pairwise_distances(const SnippetMatrix& x, std::span<const std::uint32_t> rows,
                                       const SnippetMatrix& y,
                                       std::span<const std::uint32_t> label_rows, Metric metric,
                                       const ExecPolicy& policy = {});

// Tile spill format: magic, row/col ranges, metric, row-major doubles
// (little-endian). One file per tile.
void write_block(const DistanceBlock& block, const std::filesystem::path& dir);
std::filesystem::path block_path(const std::filesystem::path& dir, std::uint32_t row_begin,
                                 std::uint32_t row_end, std::uint32_t col_begin,
                                 std::uint32_t col_end);
std::optional<DistanceBlock> read_block(const std::filesystem::path& file);

struct MetricDeltaCurve {
    std::vector<double> bin_edges; // nbins + 1 edges partitioning [0, max]
    std::vector<double> delta;     // per-bin same-class minus different-class frequency
};

/// Appendix-style metric comparison: same-class = within-positives plus
/// within-negatives pair distances, different-class = cross pairs
/// (identical row ids excluded); per-class histograms normalized before
/// differencing. Fewer than 2 rows in either class is a DataError.
MetricDeltaCurve metric_delta(const SnippetMatrix& matrix,
                              std::span<const std::uint32_t> positive_rows,
                              std::span<const std::uint32_t> negative_rows, Metric metric,
                              std::size_t bins);

} // namespace fpdetect
