#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "fpdetect/distance.hpp"
#include "fpdetect/distance_ref.hpp"
#include "fpdetect/errors.hpp"
#include "test_util.hpp"

using namespace fpdetect;
using namespace fpdetect::testutil;

namespace {

double scalar(const SnippetMatrix& m, std::uint32_t a, std::uint32_t b, Metric metric) {
    auto xa = std::span(m.cols).subspan(m.row_ptr[a], m.row_ptr[a + 1] - m.row_ptr[a]);
    auto va = std::span(m.values).subspan(m.row_ptr[a], m.row_ptr[a + 1] - m.row_ptr[a]);
    auto xb = std::span(m.cols).subspan(m.row_ptr[b], m.row_ptr[b + 1] - m.row_ptr[b]);
    auto vb = std::span(m.values).subspan(m.row_ptr[b], m.row_ptr[b + 1] - m.row_ptr[b]);
    return pair_distance(xa, va, xb, vb, metric);
}

constexpr Metric kAllMetrics[] = {Metric::chebyshev, Metric::euclidean, Metric::cityblock,
                                  Metric::cosine, Metric::jaccard};

} // namespace

TEST_CASE("closed-form pair distances") {
    auto m = matrix_from_rows({{{0, 0.5}, {1, 0.5}}, {{1, 0.5}, {2, 0.5}}}, 3);
    CHECK(scalar(m, 0, 1, Metric::chebyshev) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(scalar(m, 0, 1, Metric::cityblock) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(scalar(m, 0, 1, Metric::euclidean) ==
          doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    // exact self-distance for the metrics whose identity is exact in FP
    for (Metric metric : {Metric::chebyshev, Metric::euclidean, Metric::cityblock,
                          Metric::jaccard})
        CHECK(scalar(m, 0, 0, metric) == 0.0);
    CHECK(scalar(m, 0, 0, Metric::cosine) <= 1e-12);
}

TEST_CASE("chebyshev on disjoint supports is the larger max entry") {
    auto m = matrix_from_rows({{{0, 0.75}, {1, 0.25}}, {{2, 0.6}, {3, 0.4}}}, 4);
    CHECK(scalar(m, 0, 1, Metric::chebyshev) == 0.75);
}

TEST_CASE("blocked engine equals the naive double-loop oracle within 1e-12") {
    SnippetMatrix m = random_matrix(200, 60, 10, 404);
    auto labels = random_rows(m.n, 50, 7);
    auto all_rows = random_rows(m.n, m.n, 0);
    for (Metric metric : kAllMetrics) {
        ExecPolicy policy;
        policy.block_rows = 37;
        policy.block_cols = 11;
        auto blocked = pairwise_distances(m, all_rows, m, labels, metric, policy);
        auto naive = pairwise_distances_ref(m, all_rows, labels, metric);
        REQUIRE(blocked.size() == naive.size());
        for (std::size_t i = 0; i < blocked.size(); ++i)
            CHECK(std::abs(blocked[i] - naive[i]) <= 1e-12);
    }
}

TEST_CASE("chebyshev fast path is bit-identical to the scalar merge") {
    SnippetMatrix m = random_matrix(80, 40, 8, 55);
    auto labels = random_rows(m.n, 20, 3);
    auto all_rows = random_rows(m.n, m.n, 0);
    auto fast = pairwise_distances(m, all_rows, m, labels, Metric::chebyshev);
    for (std::size_t i = 0; i < all_rows.size(); ++i)
        for (std::size_t j = 0; j < labels.size(); ++j)
            CHECK(fast[i * labels.size() + j] ==
                  scalar(m, all_rows[i], labels[j], Metric::chebyshev));
}

TEST_CASE("tile size and worker count never change a bit") {
    SnippetMatrix m = random_matrix(300, 50, 9, 606);
    auto labels = random_rows(m.n, 70, 9);
    for (Metric metric : {Metric::chebyshev, Metric::euclidean, Metric::cityblock,
                          Metric::cosine}) {
        std::vector<std::vector<std::int64_t>> counts;
        std::vector<std::vector<double>> blocks;
        for (auto [br, bc, workers] :
             {std::tuple{std::size_t(7), std::size_t(3), 1}, {64, 16, 2}, {1024, 1024, 8}}) {
            ExecPolicy policy{workers, br, bc, std::nullopt};
            DistanceEngine engine(m, labels, metric, policy);
            counts.push_back(engine.count_labels_within(0.3));

            std::vector<double> flat(m.n * labels.size(), -1);
            engine.for_each_tile([&](const DistanceBlock& b) {
                for (std::uint32_t r = b.row_begin; r < b.row_end; ++r)
                    for (std::uint32_t c = b.col_begin; c < b.col_end; ++c)
                        flat[std::size_t(r) * labels.size() + c] = b.at(r, c);
            });
            blocks.push_back(std::move(flat));
        }
        CHECK(counts[0] == counts[1]);
        CHECK(counts[0] == counts[2]);
        CHECK(blocks[0] == blocks[1]); // exact bit equality
        CHECK(blocks[0] == blocks[2]);
    }
}

TEST_CASE("metric axioms hold on random normalized rows") {
    SnippetMatrix m = random_matrix(60, 30, 8, 99);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 300; ++i) {
        std::uint32_t a = std::uint32_t(rng() % m.n), b = std::uint32_t(rng() % m.n),
                      c = std::uint32_t(rng() % m.n);
        for (Metric metric : kAllMetrics) {
            double dab = scalar(m, a, b, metric);
            CHECK(dab >= 0.0);
            CHECK(dab == scalar(m, b, a, metric));
            if (metric == Metric::cosine)
                CHECK(scalar(m, a, a, metric) <= 1e-12);
            else
                CHECK(scalar(m, a, a, metric) == 0.0);
            if (metric == Metric::chebyshev || metric == Metric::euclidean ||
                metric == Metric::cityblock) {
                double dac = scalar(m, a, c, metric), dcb = scalar(m, c, b, metric);
                CHECK(dab <= dac + dcb + 1e-12);
            }
        }
        double cheby = scalar(m, a, b, Metric::chebyshev);
        CHECK(cheby <= scalar(m, a, b, Metric::cityblock) + 1e-15);
        CHECK(cheby <= scalar(m, a, b, Metric::euclidean) + 1e-15);
        CHECK(cheby <= 1.0); // normalized rows bound chebyshev by 1
    }
}

TEST_CASE("engine rejects bad inputs") {
    SnippetMatrix m = random_matrix(10, 5, 3, 1);
    CHECK_THROWS_AS(DistanceEngine(m, {99}, Metric::chebyshev, {}), DataError);

    SnippetMatrix nan_matrix = m;
    nan_matrix.values[0] = std::nan("");
    CHECK_THROWS_AS(DistanceEngine(nan_matrix, {0}, Metric::chebyshev, {}), DataError);

    SnippetMatrix raw = build_snippet_matrix({rec("a.test/x.js", "f", "s")}, GroupingOptions{});
    CHECK_THROWS_AS(DistanceEngine(raw, {0}, Metric::chebyshev, {}), DataError);

    SnippetMatrix other = random_matrix(10, 6, 3, 2); // different vocabulary size
    std::vector<std::uint32_t> rows{0};
    CHECK_THROWS_AS(pairwise_distances(m, rows, other, rows, Metric::chebyshev), DataError);
}

TEST_CASE("spill blocks round-trip and feed resume") {
    namespace fs = std::filesystem;
    SnippetMatrix m = random_matrix(50, 20, 6, 12);
    auto labels = random_rows(m.n, 10, 4);
    fs::path dir = fs::temp_directory_path() / "fpdetect_spill_test";
    fs::remove_all(dir);

    ExecPolicy spill_policy{2, 16, 4, dir};
    DistanceEngine engine(m, labels, Metric::euclidean, spill_policy);
    auto counts_first = engine.count_labels_within(0.4);
    CHECK(fs::exists(block_path(dir, 0, 16, 0, 4)));

    // a second engine resumes from the spilled tiles
    DistanceEngine resumed(m, labels, Metric::euclidean, spill_policy);
    CHECK(resumed.count_labels_within(0.4) == counts_first);

    // corrupt one tile; it must be recomputed, not trusted
    {
        std::ofstream bad(block_path(dir, 0, 16, 0, 4), std::ios::binary | std::ios::trunc);
        bad << "garbage";
    }
    DistanceEngine recovered(m, labels, Metric::euclidean, spill_policy);
    CHECK(recovered.count_labels_within(0.4) == counts_first);

    auto loaded = read_block(block_path(dir, 16, 32, 0, 4));
    REQUIRE(loaded);
    CHECK(loaded->metric == Metric::euclidean);
    CHECK(loaded->row_begin == 16);
    CHECK(loaded->values.size() == 16 * 4);
    fs::remove_all(dir);
}

TEST_CASE("count reductions agree between spill and streaming paths") {
    namespace fs = std::filesystem;
    SnippetMatrix m = random_matrix(70, 25, 7, 31);
    auto labels = random_rows(m.n, 20, 8);
    fs::path dir = fs::temp_directory_path() / "fpdetect_spill_counts";
    fs::remove_all(dir);

    ExecPolicy plain{2, 32, 8, std::nullopt};
    ExecPolicy spilled{2, 32, 8, dir};
    DistanceEngine a(m, labels, Metric::chebyshev, plain);
    DistanceEngine b(m, labels, Metric::chebyshev, spilled);
    CHECK(a.count_labels_within(0.25) == b.count_labels_within(0.25));
    CHECK(a.count_rows_within(0.25) == b.count_rows_within(0.25));
    fs::remove_all(dir);
}

TEST_CASE("metric_delta: separated clusters give the expected sign pattern") {
    // Cluster A: (p, 1-p, 0, 0); cluster B: (0, 0, q, 1-q). Within-cluster
    // chebyshev distances fill (0, 0.45]; cross distances fill [0.55, 1].
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;
    std::vector<std::uint32_t> pos, neg;
    for (int i = 0; i < 10; ++i) {
        double p = 0.05 * i;
        rows.push_back(p == 0 ? std::vector<std::pair<std::uint32_t, double>>{{1, 1.0}}
                              : std::vector<std::pair<std::uint32_t, double>>{{0, p}, {1, 1 - p}});
        pos.push_back(std::uint32_t(rows.size() - 1));
    }
    for (int i = 0; i < 10; ++i) {
        double q = 0.05 * i;
        rows.push_back(q == 0 ? std::vector<std::pair<std::uint32_t, double>>{{3, 1.0}}
                              : std::vector<std::pair<std::uint32_t, double>>{{2, q}, {3, 1 - q}});
        neg.push_back(std::uint32_t(rows.size() - 1));
    }
    SnippetMatrix m = matrix_from_rows(rows, 4);

    MetricDeltaCurve curve = metric_delta(m, pos, neg, Metric::chebyshev, 10);
    REQUIRE(curve.delta.size() == 10);
    CHECK(curve.bin_edges.front() == 0.0);
    CHECK(curve.bin_edges.back() == doctest::Approx(1.0));
    for (std::size_t b = 0; b < 5; ++b) CHECK(curve.delta[b] > 0.0);  // below the gap
    for (std::size_t b = 5; b < 10; ++b) CHECK(curve.delta[b] < 0.0); // above the gap
}

TEST_CASE("metric_delta: identical classes cancel exactly") {
    SnippetMatrix m = random_matrix(30, 12, 5, 321);
    auto rows = random_rows(m.n, 12, 2);
    MetricDeltaCurve curve = metric_delta(m, rows, rows, Metric::chebyshev, 8);
    for (double d : curve.delta) CHECK(d == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("metric_delta bin counts match hand enumeration") {
    // Three positives on a line at 0, 0.1, 0.2; two negatives at 0.8, 1.0
    // (chebyshev distance on (p, 1-p) rows is |p1 - p2|).
    auto row = [](double p) {
        return p == 0 ? std::vector<std::pair<std::uint32_t, double>>{{1, 1.0}}
                      : std::vector<std::pair<std::uint32_t, double>>{{0, p}, {1, 1 - p}};
    };
    SnippetMatrix m = matrix_from_rows({row(0), row(0.1), row(0.2), row(0.8), row(1.0)}, 2);
    std::vector<std::uint32_t> pos{0, 1, 2}, neg{3, 4};

    MetricDeltaCurve curve = metric_delta(m, pos, neg, Metric::chebyshev, 4);
    // same-class distances: {0.1, 0.2, 0.1} and {0.2}; diff: {0.8,1.0,0.7,0.9,0.6,0.8}
    // bins over [0,1]: [0,.25) [.25,.5) [.5,.75) [.75,1]
    CHECK(curve.delta[0] == doctest::Approx(4.0 / 4.0));
    CHECK(curve.delta[1] == doctest::Approx(0.0));
    CHECK(curve.delta[2] == doctest::Approx(-2.0 / 6.0));
    CHECK(curve.delta[3] == doctest::Approx(-4.0 / 6.0));
}

TEST_CASE("metric_delta rejects degenerate classes") {
    SnippetMatrix m = random_matrix(10, 5, 3, 77);
    std::vector<std::uint32_t> one{0}, two{1, 2};
    CHECK_THROWS_AS(metric_delta(m, one, two, Metric::chebyshev, 4), DataError);
    CHECK_THROWS_AS(metric_delta(m, two, one, Metric::chebyshev, 4), DataError);
}
