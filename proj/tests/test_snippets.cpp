#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>

#include "fpdetect/errors.hpp"
#include "fpdetect/snippets.hpp"
#include "test_util.hpp"

using namespace fpdetect;
using namespace fpdetect::testutil;

namespace {

std::map<std::string, std::map<std::string, std::int64_t>> to_cells(const SnippetMatrix& m) {
    std::map<std::string, std::map<std::string, std::int64_t>> cells;
    for (std::size_t r = 0; r < m.n; ++r)
        for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
            cells[m.keys[r].render()][m.vocabulary[m.cols[k]]] = m.counts[k];
    return cells;
}

} // namespace

TEST_CASE("snippet_key follows the grouping scheme") {
    GroupingOptions opts;
    auto k1 = snippet_key(rec("ggl.com/ga.js", "function1", "s"), opts);
    REQUIRE(k1);
    CHECK(k1->key.render() == "ggl.com||ga.js||function1");
    CHECK(k1->clean_url == "ggl.com/ga.js");

    auto k2 = snippet_key(
        rec("https://www.alaskaair.com/px/client/main.min.js?param1=2", "g", "s"), opts);
    REQUIRE(k2);
    CHECK(k2->key.render() == "alaskaair.com||main.min.js||g");
    CHECK(k2->clean_url == "www.alaskaair.com/px/client/main.min.js");

    auto k3 = snippet_key(rec("a.com/x.js", "", "s"), opts);
    REQUIRE(k3);
    CHECK(k3->key.render() == "a.com||x.js||");

    opts.strip_www = false;
    auto k4 = snippet_key(
        rec("https://www.alaskaair.com/px/client/main.min.js?param1=2", "g", "s"), opts);
    REQUIRE(k4);
    CHECK(k4->key.domain == "www.alaskaair.com");
}

TEST_CASE("inline records: skipped by default, bucketable by flag") {
    GroupingOptions opts;
    CallRecord inline_rec = rec("", "f", "s");
    inline_rec.location = "https://www.page.com/index.html";
    CHECK_FALSE(snippet_key(inline_rec, opts));

    opts.inline_policy = InlinePolicy::bucket;
    auto keyed = snippet_key(inline_rec, opts);
    REQUIRE(keyed);
    CHECK(keyed->key.domain == "inline@page.com");
    CHECK(keyed->key.file == "");
    CHECK(keyed->clean_url == "inline@page.com");
}

TEST_CASE("rendered keys round-trip even with separator collisions") {
    std::vector<SnippetKey> keys = {
        {"a.com", "x.js", "f"},
        {"a||b.com", "x||y.js", "f||g"},
        {"back\\slash", "pipe|mid", "||"},
        {"", "", ""},
    };
    for (const SnippetKey& k : keys) {
        auto parsed = SnippetKey::parse(k.render());
        REQUIRE(parsed);
        CHECK(*parsed == k);
    }
}

TEST_CASE("the worked two-table example groups and counts exactly") {
    std::vector<CallRecord> records = {
        rec("ggl.com/ga.js", "function1", "window.navigator"),
        rec("ggl.com/ga.js", "function1", "window.document.cookie"),
        rec("ggl.com/ga.js", "function2", "window.document.cookie"),
        rec("ggl.com/msc.js", "functiona", "window.navigator"),
        rec("ggl.com/ga.js", "function1", "window.navigator"),
        rec("ggl.com/ga.js", "function1", "window.document.cookie"),
        rec("ddr.com/bo.js", "dance", "window.navigator"),
    };
    SnippetMatrix m = build_snippet_matrix(records, GroupingOptions{});
    CHECK(m.n == 4);
    CHECK(m.s == 2);

    auto cells = to_cells(m);
    CHECK(cells.at("ggl.com||ga.js||function1").at("window.navigator") == 2);
    CHECK(cells.at("ggl.com||ga.js||function1").at("window.document.cookie") == 2);
    CHECK(cells.at("ggl.com||ga.js||function2").at("window.document.cookie") == 1);
    CHECK(cells.at("ggl.com||ga.js||function2").count("window.navigator") == 0);
    CHECK(cells.at("ggl.com||msc.js||functiona").at("window.navigator") == 1);
    CHECK(cells.at("ddr.com||bo.js||dance").at("window.navigator") == 1);

    CHECK(m.script_index.at("ggl.com/ga.js").size() == 2);
    CHECK(m.script_index.at("ggl.com/msc.js").size() == 1);
}

TEST_CASE("single record builds a 1x1 matrix") {
    SnippetMatrix m = build_snippet_matrix({rec("a.com/x.js", "f", "s")}, GroupingOptions{});
    CHECK(m.n == 1);
    CHECK(m.s == 1);
    CHECK(m.counts == std::vector<std::int64_t>{1});
}

TEST_CASE("empty input builds an empty matrix, not an error") {
    SnippetMatrix m = build_snippet_matrix({}, GroupingOptions{});
    CHECK(m.n == 0);
    CHECK(m.s == 0);
}

TEST_CASE("10k synthetic records match an independent tally oracle") {
    std::mt19937_64 rng(101);
    std::vector<CallRecord> records;
    std::map<std::pair<std::string, std::string>, std::int64_t> oracle;
    std::int64_t total = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string host = "h" + std::to_string(rng() % 10) + ".test";
        std::string file = "f" + std::to_string(rng() % 3) + ".js";
        std::string func = "fn" + std::to_string(rng() % 2);
        std::string symbol = "sym" + std::to_string(rng() % 7);
        records.push_back(rec(host + "/" + file, func, symbol));
        oracle[{host + "||" + file + "||" + func, symbol}] += 1;
        ++total;
    }
    std::shuffle(records.begin(), records.end(), rng);
    SnippetMatrix m = build_snippet_matrix(records, GroupingOptions{});

    std::int64_t cell_sum = 0;
    auto cells = to_cells(m);
    std::size_t cell_count = 0;
    for (const auto& [key, row] : cells)
        for (const auto& [sym, count] : row) {
            CHECK(oracle.at({key, sym}) == count);
            cell_sum += count;
            ++cell_count;
        }
    CHECK(cell_count == oracle.size());
    CHECK(cell_sum == total); // count conservation before normalization
    CHECK(std::uint64_t(total) == m.grouping_stats.keyable);
}

TEST_CASE("grouping is deterministic under record order") {
    std::vector<CallRecord> records;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 300; ++i)
        records.push_back(rec("d" + std::to_string(rng() % 5) + ".test/a.js",
                              "f" + std::to_string(rng() % 4), "s" + std::to_string(rng() % 6)));
    SnippetMatrix a = build_snippet_matrix(records, GroupingOptions{});
    std::shuffle(records.begin(), records.end(), rng);
    SnippetMatrix b = build_snippet_matrix(records, GroupingOptions{});
    CHECK(a.vocabulary == b.vocabulary);
    CHECK(a.cols == b.cols);
    CHECK(a.counts == b.counts);
    CHECK(a.row_ptr == b.row_ptr);
    REQUIRE(a.keys.size() == b.keys.size());
    for (std::size_t i = 0; i < a.keys.size(); ++i) CHECK(a.keys[i] == b.keys[i]);
}

TEST_CASE("normalize_rows divides by row sums") {
    SnippetMatrix m =
        build_snippet_matrix({rec("a.test/x.js", "f", "s0"), rec("a.test/x.js", "f", "s0"),
                              rec("a.test/x.js", "f", "s1"), rec("a.test/x.js", "f", "s1")},
                             GroupingOptions{});
    m = normalize_rows(std::move(m));
    CHECK(m.values == std::vector<double>{0.5, 0.5});

    SnippetMatrix m2 = build_snippet_matrix(
        {rec("a.test/x.js", "f", "s0"), rec("a.test/x.js", "f", "s2"),
         rec("a.test/x.js", "f", "s2"), rec("a.test/x.js", "f", "s2")},
        GroupingOptions{});
    m2 = normalize_rows(std::move(m2));
    CHECK(m2.values == std::vector<double>{0.25, 0.75});
}

TEST_CASE("normalized rows sum to 1 within 1e-9 on random input") {
    std::mt19937_64 rng(99);
    std::vector<CallRecord> records;
    for (int i = 0; i < 5000; ++i)
        records.push_back(rec("d" + std::to_string(rng() % 40) + ".test/a.js",
                              "f" + std::to_string(rng() % 5), "s" + std::to_string(rng() % 30)));
    SnippetMatrix m = normalize_rows(build_snippet_matrix(records, GroupingOptions{}));
    for (std::size_t r = 0; r < m.n; ++r) {
        double sum = 0;
        for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
            sum += m.values[k];
            CHECK(m.values[k] > 0);
            CHECK(m.values[k] <= 1.0);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("append_rows: identity on empty stream") {
    SnippetMatrix m = build_normalized({rec("a.test/x.js", "f", "s0")});
    SnippetMatrix out = append_rows(m, {}, AppendOptions{});
    CHECK(out.n == m.n);
    CHECK(out.values == m.values);
    CHECK(out.vocabulary == m.vocabulary);
}

TEST_CASE("append_rows rejects re-observed keys unless allowed") {
    SnippetMatrix m = build_normalized({rec("a.test/x.js", "f", "s0")});
    CHECK_THROWS_AS(append_rows(m, {rec("a.test/x.js", "f", "s1")}, AppendOptions{}), DataError);

    AppendOptions allow;
    allow.allow_duplicate_keys = true;
    SnippetMatrix out = append_rows(m, {rec("a.test/x.js", "f", "s1")}, allow);
    CHECK(out.n == 2);
    CHECK(out.keys[1].func == "f~2");
}

TEST_CASE("append_rows leaves existing rows byte-identical and extends the vocabulary") {
    std::vector<CallRecord> base;
    std::mt19937_64 rng(17);
    for (int i = 0; i < 400; ++i)
        base.push_back(rec("d" + std::to_string(rng() % 12) + ".test/lib.js",
                           "f" + std::to_string(rng() % 6), "s" + std::to_string(rng() % 9)));
    SnippetMatrix m = build_normalized(base);

    std::vector<CallRecord> extra = {rec("new.test/fresh.js", "f", "s3"),
                                     rec("new.test/fresh.js", "f", "zz_new_symbol"),
                                     rec("new.test/fresh.js", "g", "s0")};
    SnippetMatrix out = append_rows(m, extra, AppendOptions{});

    // serialize-and-compare: the old prefix must be unchanged bit for bit
    namespace fs = std::filesystem;
    fs::path tmp = fs::temp_directory_path() / "fpdetect_append_test";
    fs::remove_all(tmp);
    save_matrix(m, tmp / "before");
    SnippetMatrix reloaded = load_matrix(tmp / "before");
    for (std::size_t r = 0; r < m.n; ++r) {
        CHECK(out.keys[r] == reloaded.keys[r]);
        CHECK(out.row_ptr[r + 1] == reloaded.row_ptr[r + 1]);
        for (std::size_t k = out.row_ptr[r]; k < out.row_ptr[r + 1]; ++k) {
            CHECK(out.cols[k] == reloaded.cols[k]);
            CHECK(out.values[k] == reloaded.values[k]); // exact, not approx
        }
    }
    fs::remove_all(tmp);

    CHECK(out.n == m.n + 2);
    // old vocabulary is a prefix; the new symbol got a fresh id at the end
    REQUIRE(out.vocabulary.size() == m.vocabulary.size() + 1);
    for (std::size_t i = 0; i < m.vocabulary.size(); ++i)
        CHECK(out.vocabulary[i] == m.vocabulary[i]);
    CHECK(out.vocabulary.back() == "zz_new_symbol");
    CHECK(out.script_index.count("new.test/fresh.js") == 1);
    CHECK(out.script_index.at("new.test/fresh.js").size() == 2);

    // appended rows are normalized independently
    for (std::size_t r = m.n; r < out.n; ++r) {
        double sum = 0;
        for (std::size_t k = out.row_ptr[r]; k < out.row_ptr[r + 1]; ++k) sum += out.values[k];
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("matrix persistence round-trips exactly") {
    std::vector<CallRecord> records;
    std::mt19937_64 rng(23);
    for (int i = 0; i < 500; ++i)
        records.push_back(rec("d" + std::to_string(rng() % 8) + ".test/a.js",
                              "fn\twith tab" + std::to_string(rng() % 3),
                              "s" + std::to_string(rng() % 11)));
    SnippetMatrix m = build_normalized(records);

    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "fpdetect_matrix_roundtrip";
    fs::remove_all(dir);
    save_matrix(m, dir);
    SnippetMatrix l = load_matrix(dir);
    fs::remove_all(dir);

    CHECK(l.n == m.n);
    CHECK(l.s == m.s);
    CHECK(l.normalized == m.normalized);
    CHECK(l.vocabulary == m.vocabulary);
    CHECK(l.row_ptr == m.row_ptr);
    CHECK(l.cols == m.cols);
    CHECK(l.values == m.values); // %.17g round-trips doubles exactly
    REQUIRE(l.keys.size() == m.keys.size());
    for (std::size_t i = 0; i < m.keys.size(); ++i) CHECK(l.keys[i] == m.keys[i]);
    CHECK(l.script_index == m.script_index);
}
