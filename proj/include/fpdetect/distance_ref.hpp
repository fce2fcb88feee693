#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fpdetect/distance.hpp"
#include "fpdetect/snippets.hpp"

namespace fpdetect {

// Naive serial reference: densify both vectors, scan every vocabulary
// dimension, one pair at a time. Deliberately the obvious double-loop
// implementation; it is the correctness oracle for the blocked engine and
// the baseline for tools/bench_distance. Keep it independent of the
// kernels in distance.cpp.

double pair_distance_dense_ref(const std::vector<double>& x, const std::vector<double>& y,
                               Metric metric);

std::vector<double> dense_row_ref(const SnippetMatrix& m, std::uint32_t row);

/// Full rows x labels distance matrix, row-major.
std::vector<double> pairwise_distances_ref(const SnippetMatrix& m,
                                           std::span<const std::uint32_t> rows,
                                           std::span<const std::uint32_t> label_rows,
                                           Metric metric);

/// c(x) per matrix row by the set-builder definition.
std::vector<std::int64_t> neighbor_counts_ref(const SnippetMatrix& m,
                                              std::span<const std::uint32_t> label_rows, double d,
                                              Metric metric);

} // namespace fpdetect
