#include "fpdetect/distance_ref.hpp"

#include <cmath>

namespace fpdetect {

double pair_distance_dense_ref(const std::vector<double>& x, const std::vector<double>& y,
                               Metric metric) {
    const std::size_t s = x.size();
    switch (metric) {
        case Metric::chebyshev: {
            double best = 0;
            for (std::size_t i = 0; i < s; ++i) best = std::max(best, std::fabs(x[i] - y[i]));
            return best;
        }
        case Metric::euclidean: {
            double acc = 0;
            for (std::size_t i = 0; i < s; ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
            return std::sqrt(acc);
        }
        case Metric::cityblock: {
            double acc = 0;
            for (std::size_t i = 0; i < s; ++i) acc += std::fabs(x[i] - y[i]);
            return acc;
        }
        case Metric::cosine: {
            double dot = 0, nx = 0, ny = 0;
            for (std::size_t i = 0; i < s; ++i) {
                dot += x[i] * y[i];
                nx += x[i] * x[i];
                ny += y[i] * y[i];
            }
            if (nx == 0 || ny == 0) return 1.0;
            return std::max(0.0, 1.0 - dot / (std::sqrt(nx) * std::sqrt(ny)));
        }
        case Metric::jaccard: {
            std::size_t uni = 0, disagree = 0;
            for (std::size_t i = 0; i < s; ++i) {
                if (x[i] == 0 && y[i] == 0) continue;
                ++uni;
                if (x[i] != y[i]) ++disagree;
            }
            return uni == 0 ? 0.0 : double(disagree) / double(uni);
        }
    }
    return 0;
}

std::vector<double> dense_row_ref(const SnippetMatrix& m, std::uint32_t row) {
    std::vector<double> out(m.s, 0.0);
    for (std::size_t k = m.row_ptr[row]; k < m.row_ptr[row + 1]; ++k)
        out[m.cols[k]] = m.values[k];
    return out;
}

std::vector<double> pairwise_distances_ref(const SnippetMatrix& m,
                                           std::span<const std::uint32_t> rows,
                                           std::span<const std::uint32_t> label_rows,
                                           Metric metric) {
    std::vector<double> out(rows.size() * label_rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < label_rows.size(); ++j) {
            std::vector<double> x = dense_row_ref(m, rows[i]);
            std::vector<double> y = dense_row_ref(m, label_rows[j]);
            out[i * label_rows.size() + j] = pair_distance_dense_ref(x, y, metric);
        }
    }
    return out;
}

std::vector<std::int64_t> neighbor_counts_ref(const SnippetMatrix& m,
                                              std::span<const std::uint32_t> label_rows, double d,
                                              Metric metric) {
    std::vector<std::int64_t> counts(m.n, 0);
    for (std::uint32_t r = 0; r < m.n; ++r) {
        std::vector<double> x = dense_row_ref(m, r);
        for (std::uint32_t y : label_rows) {
            if (pair_distance_dense_ref(x, dense_row_ref(m, y), metric) <= d) ++counts[r];
        }
    }
    return counts;
}

} // namespace fpdetect
