// Benchmark: blocked OpenMP distance engine vs the serial densify-and-scan
// reference on synthetic normalized sparse rows. The reference can be
// restricted to a row slice (--naive-rows) and extrapolated, since the
// full naive run is the point of avoiding.

#include <chrono>
#include <cstdio>
#include <random>

#include <CLI11.hpp>

#include "fpdetect/distance.hpp"
#include "fpdetect/distance_ref.hpp"
#include "fpdetect/snippets.hpp"
#include "fpdetect/text.hpp"

using namespace fpdetect;

namespace {

SnippetMatrix synth_matrix(std::size_t n, std::size_t s, double density, std::uint64_t seed) {
    SnippetMatrix m;
    m.n = n;
    m.s = s;
    m.normalized = true;
    m.vocabulary.resize(s);
    for (std::size_t i = 0; i < s; ++i) m.vocabulary[i] = "sym" + std::to_string(i);
    m.keys.resize(n);

    std::mt19937_64 rng(splitmix64(seed));
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    std::size_t nnz_per_row = std::max<std::size_t>(1, std::size_t(density * double(s)));

    m.row_ptr.push_back(0);
    std::vector<std::uint32_t> cols(s);
    for (std::size_t i = 0; i < s; ++i) cols[i] = std::uint32_t(i);
    for (std::size_t r = 0; r < n; ++r) {
        m.keys[r] = SnippetKey{"row" + std::to_string(r), "x.js", "f"};
        for (std::size_t i = 0; i < nnz_per_row; ++i)
            std::swap(cols[i], cols[i + rng() % (s - i)]);
        std::vector<std::uint32_t> chosen(cols.begin(), cols.begin() + std::ptrdiff_t(nnz_per_row));
        std::sort(chosen.begin(), chosen.end());
        double sum = 0;
        std::vector<double> vals(nnz_per_row);
        for (auto& v : vals) sum += (v = unit(rng));
        for (std::size_t i = 0; i < nnz_per_row; ++i) {
            m.cols.push_back(chosen[i]);
            m.values.push_back(vals[i] / sum);
        }
        m.row_ptr.push_back(m.cols.size());
    }
    return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"distance kernel benchmark: blocked OpenMP vs serial naive reference"};
    std::size_t n = 50000, d = 5000, s = 300;
    double density = 0.05, threshold = 0.25;
    std::size_t naive_rows = 2500;
    std::uint64_t seed = 42;
    int workers = 0;
    std::size_t block_rows = 4096, block_cols = 1024;
    std::string metric_str = "chebyshev";
    app.add_option("-n,--rows", n, "snippet rows");
    app.add_option("-d,--labels", d, "label rows");
    app.add_option("-s,--symbols", s, "vocabulary size");
    app.add_option("--density", density, "nonzeros per row / s");
    app.add_option("--threshold", threshold, "count threshold");
    app.add_option("--metric", metric_str, "distance metric");
    app.add_option("--naive-rows", naive_rows,
                   "rows for the naive baseline (0 = all rows, extrapolated otherwise)");
    app.add_option("--workers", workers, "threads for the blocked engine (0 = all)");
    app.add_option("--block-rows", block_rows, "tile rows");
    app.add_option("--block-cols", block_cols, "tile cols");
    app.add_option("--seed", seed, "rng seed");
    CLI11_PARSE(app, argc, argv);

    auto metric = metric_from_name(metric_str);
    if (!metric) {
        std::fprintf(stderr, "unknown metric: %s\n", metric_str.c_str());
        return 1;
    }

    std::printf("generating %zu x %zu matrix (s=%zu, density=%.3f, seed=%llu)...\n", n, d, s,
                density, (unsigned long long)seed);
    SnippetMatrix m = synth_matrix(n, s, density, seed);
    std::vector<std::uint32_t> labels(d);
    std::mt19937_64 rng(splitmix64(seed ^ 1));
    for (auto& l : labels) l = std::uint32_t(rng() % n);
    std::sort(labels.begin(), labels.end());

    ExecPolicy policy;
    policy.workers = workers;
    policy.block_rows = block_rows;
    policy.block_cols = block_cols;

    auto t0 = std::chrono::steady_clock::now();
    DistanceEngine engine(m, labels, *metric, policy);
    auto counts = engine.count_labels_within(threshold);
    double blocked_secs = seconds_since(t0);
    std::int64_t total = 0;
    for (auto c : counts) total += c;
    std::printf("blocked:  %.3fs for %zu pairs (%.1f Mpairs/s), checksum=%lld\n", blocked_secs,
                n * d, double(n) * double(d) / blocked_secs / 1e6, (long long)total);

    std::size_t slice = naive_rows == 0 ? n : std::min(naive_rows, n);
    std::vector<std::uint32_t> slice_rows(slice);
    for (std::size_t i = 0; i < slice; ++i) slice_rows[i] = std::uint32_t(i);
    t0 = std::chrono::steady_clock::now();
    auto ref = pairwise_distances_ref(m, slice_rows, labels, *metric);
    double naive_secs = seconds_since(t0);
    double naive_full = naive_secs * double(n) / double(slice);
    std::int64_t ref_total = 0;
    for (double v : ref)
        if (v <= threshold) ++ref_total;
    std::printf("naive:    %.3fs for %zu rows (%.1f Mpairs/s)%s\n", naive_secs, slice,
                double(slice) * double(d) / naive_secs / 1e6,
                slice < n ? ", extrapolating" : "");
    if (slice < n) std::printf("naive (extrapolated to %zu rows): %.3fs\n", n, naive_full);

    // cross-check the slice against the blocked counts
    std::int64_t blocked_slice_total = 0;
    for (std::size_t i = 0; i < slice; ++i) blocked_slice_total += counts[i];
    std::printf("slice checksum: naive=%lld blocked=%lld %s\n", (long long)ref_total,
                (long long)blocked_slice_total,
                ref_total == blocked_slice_total ? "(match)" : "(MISMATCH)");
    std::printf("speedup (naive/blocked): %.1fx\n", naive_full / blocked_secs);
    return ref_total == blocked_slice_total ? 0 : 1;
}
