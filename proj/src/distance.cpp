#include "fpdetect/distance.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <omp.h>

#include "fpdetect/errors.hpp"

namespace fpdetect {

const char* metric_name(Metric m) {
    switch (m) {
        case Metric::chebyshev: return "chebyshev";
        case Metric::euclidean: return "euclidean";
        case Metric::cityblock: return "cityblock";
        case Metric::cosine: return "cosine";
        case Metric::jaccard: return "jaccard";
    }
    return "?";
}

std::optional<Metric> metric_from_name(std::string_view name) {
    if (name == "chebyshev") return Metric::chebyshev;
    if (name == "euclidean") return Metric::euclidean;
    if (name == "cityblock") return Metric::cityblock;
    if (name == "cosine") return Metric::cosine;
    if (name == "jaccard") return Metric::jaccard;
    return std::nullopt;
}

bool metric_has_fast_path(Metric m) {
    return m == Metric::chebyshev || m == Metric::euclidean || m == Metric::cityblock;
}

double pair_distance(std::span<const std::uint32_t> xc, std::span<const double> xv,
                     std::span<const std::uint32_t> yc, std::span<const double> yv,
                     Metric metric) {
    std::size_t i = 0, j = 0;
    switch (metric) {
        case Metric::chebyshev: {
            double best = 0;
            while (i < xc.size() || j < yc.size()) {
                double diff;
                if (j >= yc.size() || (i < xc.size() && xc[i] < yc[j])) {
                    diff = std::fabs(xv[i]);
                    ++i;
                } else if (i >= xc.size() || yc[j] < xc[i]) {
                    diff = std::fabs(yv[j]);
                    ++j;
                } else {
                    diff = std::fabs(xv[i] - yv[j]);
                    ++i, ++j;
                }
                best = std::max(best, diff);
            }
            return best;
        }
        case Metric::euclidean: {
            double acc = 0;
            while (i < xc.size() || j < yc.size()) {
                double diff;
                if (j >= yc.size() || (i < xc.size() && xc[i] < yc[j])) {
                    diff = xv[i];
                    ++i;
                } else if (i >= xc.size() || yc[j] < xc[i]) {
                    diff = yv[j];
                    ++j;
                } else {
                    diff = xv[i] - yv[j];
                    ++i, ++j;
                }
                acc += diff * diff;
            }
            return std::sqrt(acc);
        }
        case Metric::cityblock: {
            double acc = 0;
            while (i < xc.size() || j < yc.size()) {
                if (j >= yc.size() || (i < xc.size() && xc[i] < yc[j])) {
                    acc += std::fabs(xv[i]);
                    ++i;
                } else if (i >= xc.size() || yc[j] < xc[i]) {
                    acc += std::fabs(yv[j]);
                    ++j;
                } else {
                    acc += std::fabs(xv[i] - yv[j]);
                    ++i, ++j;
                }
            }
            return acc;
        }
        case Metric::cosine: {
            double dot = 0, nx = 0, ny = 0;
            for (double v : xv) nx += v * v;
            for (double v : yv) ny += v * v;
            while (i < xc.size() && j < yc.size()) {
                if (xc[i] < yc[j]) ++i;
                else if (yc[j] < xc[i]) ++j;
                else dot += xv[i] * yv[j], ++i, ++j;
            }
            if (nx == 0 || ny == 0) return 1.0;
            return std::max(0.0, 1.0 - dot / (std::sqrt(nx) * std::sqrt(ny)));
        }
        case Metric::jaccard: {
            // scipy convention on sparse data: fraction of the union
            // support where the two vectors disagree.
            std::size_t uni = 0, disagree = 0;
            while (i < xc.size() || j < yc.size()) {
                ++uni;
                if (j >= yc.size() || (i < xc.size() && xc[i] < yc[j])) {
                    ++disagree;
                    ++i;
                } else if (i >= xc.size() || yc[j] < xc[i]) {
                    ++disagree;
                    ++j;
                } else {
                    if (xv[i] != yv[j]) ++disagree;
                    ++i, ++j;
                }
            }
            return uni == 0 ? 0.0 : double(disagree) / double(uni);
        }
    }
    return 0;
}

namespace {

struct RowView {
    std::span<const std::uint32_t> cols;
    std::span<const double> vals;
};

RowView row_view(const SnippetMatrix& m, std::uint32_t row) {
    std::size_t b = m.row_ptr[row], e = m.row_ptr[row + 1];
    return {std::span(m.cols).subspan(b, e - b), std::span(m.values).subspan(b, e - b)};
}

// Label-side context for one column block: dense scatter of each label.
// Together with a row-support stamp this gives O(nnz_x + nnz_y) pairs
// without subtraction identities, which would cancel catastrophically
// for near-identical rows. All per-pair arithmetic runs in a fixed
// order, so results do not depend on tiling or thread count.
struct LabelCtx {
    std::size_t s = 0;
    std::size_t count = 0;
    std::vector<double> dense; // count x s
};

LabelCtx build_label_ctx(const SnippetMatrix& m, std::span<const std::uint32_t> labels) {
    LabelCtx ctx;
    ctx.s = m.s;
    ctx.count = labels.size();
    ctx.dense.assign(ctx.count * ctx.s, 0.0);
    for (std::size_t j = 0; j < labels.size(); ++j) {
        RowView y = row_view(m, labels[j]);
        double* dense = ctx.dense.data() + j * ctx.s;
        for (std::size_t k = 0; k < y.cols.size(); ++k) dense[y.cols[k]] = y.vals[k];
    }
    return ctx;
}

inline double fast_chebyshev(RowView x, RowView y, const double* dense,
                             const std::uint32_t* stamp, std::uint32_t mark) {
    double m1 = 0;
    for (std::size_t k = 0; k < x.cols.size(); ++k)
        m1 = std::max(m1, std::fabs(x.vals[k] - dense[x.cols[k]]));
    double m2 = 0;
    for (std::size_t k = 0; k < y.cols.size(); ++k)
        if (stamp[y.cols[k]] != mark) m2 = std::max(m2, std::fabs(y.vals[k]));
    return std::max(m1, m2);
}

inline double fast_euclidean(RowView x, RowView y, const double* dense,
                             const std::uint32_t* stamp, std::uint32_t mark) {
    double acc = 0;
    for (std::size_t k = 0; k < x.cols.size(); ++k) {
        double d = x.vals[k] - dense[x.cols[k]];
        acc += d * d;
    }
    for (std::size_t k = 0; k < y.cols.size(); ++k)
        if (stamp[y.cols[k]] != mark) acc += y.vals[k] * y.vals[k];
    return std::sqrt(acc);
}

inline double fast_cityblock(RowView x, RowView y, const double* dense,
                             const std::uint32_t* stamp, std::uint32_t mark) {
    double acc = 0;
    for (std::size_t k = 0; k < x.cols.size(); ++k)
        acc += std::fabs(x.vals[k] - dense[x.cols[k]]);
    for (std::size_t k = 0; k < y.cols.size(); ++k)
        if (stamp[y.cols[k]] != mark) acc += std::fabs(y.vals[k]);
    return acc;
}

// Dense label scatter is capped so pathological vocabularies cannot blow
// up memory; beyond the cap every metric takes the generic merge path.
constexpr std::size_t kDenseVocabCap = 1u << 17;

// Serial tile computation; uses the same kernels in the same per-pair
// order as the streaming path, so values are bit-identical to it.
DistanceBlock compute_tile(const SnippetMatrix& m, std::span<const std::uint32_t> label_rows,
                           Metric metric, std::uint32_t r0, std::uint32_t r1, std::uint32_t c0,
                           std::uint32_t c1) {
    DistanceBlock block;
    block.row_begin = r0;
    block.row_end = r1;
    block.col_begin = c0;
    block.col_end = c1;
    block.metric = metric;
    const std::size_t w = c1 - c0;
    block.values.assign(std::size_t(r1 - r0) * w, 0.0);

    const bool fast = metric_has_fast_path(metric) && m.s <= kDenseVocabCap;
    LabelCtx ctx;
    if (fast) ctx = build_label_ctx(m, label_rows.subspan(c0, w));
    std::vector<std::uint32_t> stamp;
    if (fast) stamp.assign(m.s, std::numeric_limits<std::uint32_t>::max());

    for (std::uint32_t r = r0; r < r1; ++r) {
        RowView x = row_view(m, r);
        if (!stamp.empty())
            for (std::uint32_t c : x.cols) stamp[c] = r;
        double* out_row = block.values.data() + std::size_t(r - r0) * w;
        for (std::size_t j = 0; j < w; ++j) {
            double dist;
            if (fast) {
                const double* dense = ctx.dense.data() + j * m.s;
                RowView y = row_view(m, label_rows[c0 + j]);
                switch (metric) {
                    case Metric::chebyshev:
                        dist = fast_chebyshev(x, y, dense, stamp.data(), r);
                        break;
                    case Metric::euclidean:
                        dist = fast_euclidean(x, y, dense, stamp.data(), r);
                        break;
                    default:
                        dist = fast_cityblock(x, y, dense, stamp.data(), r);
                        break;
                }
            } else {
                RowView y = row_view(m, label_rows[c0 + j]);
                dist = pair_distance(x.cols, x.vals, y.cols, y.vals, metric);
            }
            out_row[j] = dist;
        }
    }
    return block;
}

} // namespace

DistanceEngine::DistanceEngine(const SnippetMatrix& matrix, std::vector<std::uint32_t> label_rows,
                               Metric metric, ExecPolicy policy)
    : matrix_(matrix), label_rows_(std::move(label_rows)), metric_(metric), policy_(policy) {
    if (!matrix_.normalized) throw DataError("distance engine requires a normalized matrix");
    for (std::uint32_t r : label_rows_)
        if (r >= matrix_.n) throw DataError("label row id out of range");
    for (double v : matrix_.values)
        if (!std::isfinite(v)) throw DataError("matrix contains non-finite values");
    if (policy_.block_rows == 0) policy_.block_rows = 4096;
    if (policy_.block_cols == 0) policy_.block_cols = 1024;
}

template <typename PairVisitor>
void DistanceEngine::visit_tiles(PairVisitor&& visit) const {
    const SnippetMatrix& m = matrix_;
    const std::size_t n = m.n, d = label_rows_.size();
    if (n == 0 || d == 0) return;

    const bool fast = metric_has_fast_path(metric_) && m.s <= kDenseVocabCap;
    const std::size_t br = policy_.block_rows, bc = policy_.block_cols;
    const int workers = policy_.workers > 0 ? policy_.workers : omp_get_max_threads();
    const std::size_t n_row_blocks = (n + br - 1) / br;

    for (std::size_t c0 = 0; c0 < d; c0 += bc) {
        const std::size_t c1 = std::min(d, c0 + bc);
        std::span<const std::uint32_t> block_labels =
            std::span(label_rows_).subspan(c0, c1 - c0);
        LabelCtx ctx;
        if (fast) ctx = build_label_ctx(m, block_labels);

#pragma omp parallel num_threads(workers)
        {
            std::vector<std::uint32_t> stamp;
            if (fast) stamp.assign(m.s, std::numeric_limits<std::uint32_t>::max());

#pragma omp for schedule(dynamic)
            for (std::ptrdiff_t rb = 0; rb < std::ptrdiff_t(n_row_blocks); ++rb) {
                const std::uint32_t r0 = std::uint32_t(std::size_t(rb) * br);
                const std::uint32_t r1 = std::uint32_t(std::min(n, std::size_t(rb) * br + br));
                for (std::uint32_t r = r0; r < r1; ++r) {
                    RowView x = row_view(m, r);
                    if (!stamp.empty())
                        for (std::uint32_t c : x.cols) stamp[c] = r;
                    for (std::size_t j = c0; j < c1; ++j) {
                        double dist;
                        if (fast) {
                            const double* dense = ctx.dense.data() + (j - c0) * m.s;
                            RowView y = row_view(m, label_rows_[j]);
                            switch (metric_) {
                                case Metric::chebyshev:
                                    dist = fast_chebyshev(x, y, dense, stamp.data(), r);
                                    break;
                                case Metric::euclidean:
                                    dist = fast_euclidean(x, y, dense, stamp.data(), r);
                                    break;
                                default:
                                    dist = fast_cityblock(x, y, dense, stamp.data(), r);
                                    break;
                            }
                        } else {
                            RowView y = row_view(m, label_rows_[j]);
                            dist = pair_distance(x.cols, x.vals, y.cols, y.vals, metric_);
                        }
                        visit(r, std::uint32_t(j), dist);
                    }
                }
            }
        }
    }
}

void DistanceEngine::for_each_tile(const std::function<void(const DistanceBlock&)>& sink) const {
    const SnippetMatrix& m = matrix_;
    const std::size_t n = m.n, d = label_rows_.size();
    if (n == 0 || d == 0) return;
    const std::size_t br = policy_.block_rows, bc = policy_.block_cols;
    const int workers = policy_.workers > 0 ? policy_.workers : omp_get_max_threads();
    const std::size_t n_row_blocks = (n + br - 1) / br;
    const std::size_t n_col_blocks = (d + bc - 1) / bc;
    const std::size_t n_tiles = n_row_blocks * n_col_blocks;

#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::ptrdiff_t tile = 0; tile < std::ptrdiff_t(n_tiles); ++tile) {
        const std::size_t rb = std::size_t(tile) / n_col_blocks;
        const std::size_t cb = std::size_t(tile) % n_col_blocks;
        const std::uint32_t r0 = std::uint32_t(rb * br);
        const std::uint32_t r1 = std::uint32_t(std::min(n, rb * br + br));
        const std::uint32_t c0 = std::uint32_t(cb * bc);
        const std::uint32_t c1 = std::uint32_t(std::min(d, cb * bc + bc));

        if (policy_.spill_dir) {
            auto path = block_path(*policy_.spill_dir, r0, r1, c0, c1);
            if (auto loaded = read_block(path);
                loaded && loaded->metric == metric_ && loaded->row_begin == r0 &&
                loaded->row_end == r1 && loaded->col_begin == c0 && loaded->col_end == c1) {
                sink(*loaded);
                continue;
            }
        }

        DistanceBlock block = compute_tile(m, label_rows_, metric_, r0, r1, c0, c1);
        if (policy_.spill_dir) write_block(block, *policy_.spill_dir);
        sink(block);
    }
}

std::vector<std::int64_t> DistanceEngine::count_labels_within(double d) const {
    std::vector<std::int64_t> counts(matrix_.n, 0);
    if (policy_.spill_dir) {
        std::vector<std::int64_t>* out = &counts;
        for_each_tile([out, d](const DistanceBlock& b) {
            const std::size_t w = b.col_end - b.col_begin;
            for (std::uint32_t r = b.row_begin; r < b.row_end; ++r) {
                std::int64_t local = 0;
                const double* row = b.values.data() + std::size_t(r - b.row_begin) * w;
                for (std::size_t j = 0; j < w; ++j)
                    if (row[j] <= d) ++local;
#pragma omp atomic
                (*out)[r] += local;
            }
        });
        return counts;
    }
    visit_tiles([&counts, d](std::uint32_t row, std::uint32_t, double dist) {
        if (dist <= d) ++counts[row]; // row owned by one thread per sweep
    });
    return counts;
}

std::vector<std::int64_t> DistanceEngine::count_rows_within(double d) const {
    std::vector<std::int64_t> counts(label_rows_.size(), 0);
    auto accumulate = [&counts, d](std::uint32_t, std::uint32_t label_idx, double dist) {
        if (dist <= d) {
#pragma omp atomic
            ++counts[label_idx];
        }
    };
    if (policy_.spill_dir) {
        for_each_tile([&](const DistanceBlock& b) {
            const std::size_t w = b.col_end - b.col_begin;
            for (std::uint32_t r = b.row_begin; r < b.row_end; ++r)
                for (std::size_t j = 0; j < w; ++j)
                    accumulate(r, std::uint32_t(b.col_begin + j),
                               b.values[std::size_t(r - b.row_begin) * w + j]);
        });
        return counts;
    }
    visit_tiles(accumulate);
    return counts;
}

std::vector<double> pairwise_distances(const SnippetMatrix& x, std::span<const std::uint32_t> rows,
                                       const SnippetMatrix& y,
                                       std::span<const std::uint32_t> label_rows, Metric metric,
                                       const ExecPolicy& policy) {
    if (x.vocabulary != y.vocabulary)
        throw DataError("pairwise_distances: operands do not share a vocabulary");
    if (!x.normalized || !y.normalized)
        throw DataError("pairwise_distances: operands must be normalized");
    for (double v : y.values)
        if (!std::isfinite(v)) throw DataError("matrix contains non-finite values");

    // Shared-vocabulary cross product via the same scalar kernels.
    std::vector<double> out(rows.size() * label_rows.size());
    LabelCtx ctx = build_label_ctx(y, label_rows);
    const bool fast = metric_has_fast_path(metric) && y.s <= kDenseVocabCap;
    const int workers = policy.workers > 0 ? policy.workers : omp_get_max_threads();

#pragma omp parallel num_threads(workers)
    {
        std::vector<std::uint32_t> stamp;
        if (fast) stamp.assign(x.s, std::numeric_limits<std::uint32_t>::max());
#pragma omp for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(rows.size()); ++i) {
            RowView xv = row_view(x, rows[i]);
            if (!stamp.empty())
                for (std::uint32_t c : xv.cols) stamp[c] = std::uint32_t(i);
            for (std::size_t j = 0; j < label_rows.size(); ++j) {
                double dist;
                if (fast) {
                    const double* dense = ctx.dense.data() + j * y.s;
                    RowView yv = row_view(y, label_rows[j]);
                    switch (metric) {
                        case Metric::chebyshev:
                            dist = fast_chebyshev(xv, yv, dense, stamp.data(), std::uint32_t(i));
                            break;
                        case Metric::euclidean:
                            dist = fast_euclidean(xv, yv, dense, stamp.data(), std::uint32_t(i));
                            break;
                        default:
                            dist = fast_cityblock(xv, yv, dense, stamp.data(), std::uint32_t(i));
                            break;
                    }
                } else {
                    RowView yv = row_view(y, label_rows[j]);
                    dist = pair_distance(xv.cols, xv.vals, yv.cols, yv.vals, metric);
                }
                out[std::size_t(i) * label_rows.size() + j] = dist;
            }
        }
    }
    return out;
}

namespace {
constexpr char kTileMagic[8] = {'F', 'P', 'D', 'T', 'I', 'L', 'E', '1'};
}

std::filesystem::path block_path(const std::filesystem::path& dir, std::uint32_t row_begin,
                                 std::uint32_t row_end, std::uint32_t col_begin,
                                 std::uint32_t col_end) {
    return dir / ("block_r" + std::to_string(row_begin) + "-" + std::to_string(row_end) + "_c" +
                  std::to_string(col_begin) + "-" + std::to_string(col_end) + ".dtile");
}

void write_block(const DistanceBlock& block, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto path = block_path(dir, block.row_begin, block.row_end, block.col_begin, block.col_end);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(kTileMagic, sizeof kTileMagic);
        std::uint32_t header[5] = {block.row_begin, block.row_end, block.col_begin, block.col_end,
                                   std::uint32_t(block.metric)};
        out.write(reinterpret_cast<const char*>(header), sizeof header);
        std::uint64_t count = block.values.size();
        out.write(reinterpret_cast<const char*>(&count), sizeof count);
        out.write(reinterpret_cast<const char*>(block.values.data()),
                  std::streamsize(count * sizeof(double)));
        if (!out) throw DataError("failed writing distance tile " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

std::optional<DistanceBlock> read_block(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kTileMagic, sizeof magic) != 0)
        return std::nullopt;
    std::uint32_t header[5];
    if (!in.read(reinterpret_cast<char*>(header), sizeof header)) return std::nullopt;
    std::uint64_t count = 0;
    if (!in.read(reinterpret_cast<char*>(&count), sizeof count)) return std::nullopt;

    DistanceBlock block;
    block.row_begin = header[0];
    block.row_end = header[1];
    block.col_begin = header[2];
    block.col_end = header[3];
    block.metric = Metric(header[4]);
    if (count != std::uint64_t(block.row_end - block.row_begin) *
                     (block.col_end - block.col_begin))
        return std::nullopt;
    block.values.resize(count);
    if (!in.read(reinterpret_cast<char*>(block.values.data()),
                 std::streamsize(count * sizeof(double))))
        return std::nullopt;
    return block;
}

MetricDeltaCurve metric_delta(const SnippetMatrix& matrix,
                              std::span<const std::uint32_t> positive_rows,
                              std::span<const std::uint32_t> negative_rows, Metric metric,
                              std::size_t bins) {
    if (positive_rows.size() < 2 || negative_rows.size() < 2)
        throw DataError("metric_delta requires at least 2 rows in each class");
    if (bins == 0) throw ConfigError("metric_delta requires at least one bin");
    if (!matrix.normalized) throw DataError("metric_delta requires a normalized matrix");

    auto pair = [&](std::uint32_t a, std::uint32_t b) {
        RowView x = row_view(matrix, a), y = row_view(matrix, b);
        return pair_distance(x.cols, x.vals, y.cols, y.vals, metric);
    };

    std::vector<double> same, diff;
    for (std::size_t i = 0; i < positive_rows.size(); ++i)
        for (std::size_t j = i + 1; j < positive_rows.size(); ++j)
            same.push_back(pair(positive_rows[i], positive_rows[j]));
    for (std::size_t i = 0; i < negative_rows.size(); ++i)
        for (std::size_t j = i + 1; j < negative_rows.size(); ++j)
            same.push_back(pair(negative_rows[i], negative_rows[j]));
    for (std::uint32_t p : positive_rows)
        for (std::uint32_t q : negative_rows)
            if (p != q) diff.push_back(pair(p, q));
    if (diff.empty()) throw DataError("metric_delta: no cross-class pairs");

    double max_dist = 0;
    for (double v : same) max_dist = std::max(max_dist, v);
    for (double v : diff) max_dist = std::max(max_dist, v);
    if (max_dist <= 0) max_dist = 1.0; // all pairs identical; single-spike histogram

    MetricDeltaCurve curve;
    curve.bin_edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b)
        curve.bin_edges[b] = max_dist * double(b) / double(bins);
    curve.delta.assign(bins, 0.0);

    auto bin_of = [&](double v) {
        auto b = std::size_t(v / max_dist * double(bins));
        return std::min(b, bins - 1);
    };
    for (double v : same) curve.delta[bin_of(v)] += 1.0 / double(same.size());
    for (double v : diff) curve.delta[bin_of(v)] -= 1.0 / double(diff.size());
    return curve;
}

} // namespace fpdetect
