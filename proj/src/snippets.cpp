#include "fpdetect/snippets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "fpdetect/errors.hpp"
#include "fpdetect/text.hpp"

namespace fpdetect {

namespace {

std::string escape_component(std::string_view c) {
    std::string out;
    out.reserve(c.size());
    for (char ch : c) {
        if (ch == '|' || ch == '\\') out.push_back('\\');
        out.push_back(ch);
    }
    return out;
}

// Splits on unescaped "||" and unescapes components.
std::optional<std::vector<std::string>> split_rendered(std::string_view s) {
    std::vector<std::string> parts;
    std::string cur;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            cur.push_back(s[++i]);
        } else if (s[i] == '|' && i + 1 < s.size() && s[i + 1] == '|') {
            parts.push_back(std::move(cur));
            cur.clear();
            ++i;
        } else {
            cur.push_back(s[i]);
        }
    }
    parts.push_back(std::move(cur));
    if (parts.size() != 3) return std::nullopt;
    return parts;
}

} // namespace

std::string SnippetKey::render() const {
    return escape_component(domain) + "||" + escape_component(file) + "||" +
           escape_component(func);
}

std::optional<SnippetKey> SnippetKey::parse(std::string_view rendered) {
    auto parts = split_rendered(rendered);
    if (!parts) return std::nullopt;
    return SnippetKey{(*parts)[0], (*parts)[1], (*parts)[2]};
}

std::optional<KeyedRecord> snippet_key(const CallRecord& record, const GroupingOptions& options) {
    const PublicSuffixList& psl = options.psl ? *options.psl : PublicSuffixList::bundled();

    if (record.script_url.empty()) {
        if (options.inline_policy == InlinePolicy::skip) return std::nullopt;
        auto loc = url_parts(record.location, psl);
        if (!loc) return std::nullopt;
        std::string domain = "inline@" + (options.strip_www ? strip_www(loc->fqdn) : loc->fqdn);
        return KeyedRecord{SnippetKey{domain, "", record.func_name}, domain};
    }

    auto parts = url_parts(record.script_url, psl);
    if (!parts) return std::nullopt;
    std::string domain = options.strip_www ? strip_www(parts->fqdn) : parts->fqdn;
    return KeyedRecord{SnippetKey{domain, parts->path_end, record.func_name},
                       clean_script_url(record.script_url)};
}

namespace {

struct Tally {
    // key -> (symbol id -> count), plus contributing clean urls per key
    std::unordered_map<std::string, std::unordered_map<std::uint32_t, std::int64_t>> cells;
    std::unordered_map<std::string, SnippetKey> key_structs;
    std::unordered_map<std::string, std::vector<std::string>> key_scripts;
    std::unordered_map<std::string, std::uint32_t> symbol_ids;
    std::vector<std::string> symbols;
    GroupingStats stats;
};

void tally_records(const std::vector<CallRecord>& records, const GroupingOptions& options,
                   Tally& t) {
    for (const CallRecord& rec : records) {
        auto keyed = snippet_key(rec, options);
        if (!keyed) {
            if (rec.script_url.empty())
                ++t.stats.skipped_inline;
            else
                ++t.stats.skipped_bad_host;
            continue;
        }
        ++t.stats.keyable;

        auto [sym_it, fresh] = t.symbol_ids.try_emplace(rec.symbol, std::uint32_t(t.symbols.size()));
        if (fresh) t.symbols.push_back(rec.symbol);

        std::string rendered = keyed->key.render();
        t.cells[rendered][sym_it->second] += 1;
        t.key_structs.try_emplace(rendered, keyed->key);
        auto& scripts = t.key_scripts[rendered];
        if (std::find(scripts.begin(), scripts.end(), keyed->clean_url) == scripts.end())
            scripts.push_back(keyed->clean_url);
    }
}

// Canonical form: rows sorted by rendered key, vocabulary sorted by symbol.
SnippetMatrix finalize(Tally&& t) {
    SnippetMatrix m;
    m.grouping_stats = t.stats;

    std::vector<std::uint32_t> symbol_remap(t.symbols.size());
    {
        std::vector<std::uint32_t> order(t.symbols.size());
        for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::uint32_t a, std::uint32_t b) { return t.symbols[a] < t.symbols[b]; });
        m.vocabulary.reserve(order.size());
        for (std::uint32_t new_id = 0; new_id < order.size(); ++new_id) {
            symbol_remap[order[new_id]] = new_id;
            m.vocabulary.push_back(t.symbols[order[new_id]]);
        }
    }
    m.s = m.vocabulary.size();

    std::vector<std::string> row_order;
    row_order.reserve(t.cells.size());
    for (const auto& [rendered, _] : t.cells) row_order.push_back(rendered);
    std::sort(row_order.begin(), row_order.end());

    m.n = row_order.size();
    m.row_ptr.reserve(m.n + 1);
    m.row_ptr.push_back(0);
    for (std::uint32_t row = 0; row < m.n; ++row) {
        const std::string& rendered = row_order[row];
        m.keys.push_back(t.key_structs.at(rendered));

        std::vector<std::pair<std::uint32_t, std::int64_t>> cells;
        for (const auto& [old_id, count] : t.cells.at(rendered))
            cells.emplace_back(symbol_remap[old_id], count);
        std::sort(cells.begin(), cells.end());
        for (const auto& [sym, count] : cells) {
            m.cols.push_back(sym);
            m.counts.push_back(count);
        }
        m.row_ptr.push_back(m.cols.size());

        for (const std::string& script : t.key_scripts.at(rendered))
            m.script_index[script].push_back(row);
    }
    for (auto& [_, rows] : m.script_index) std::sort(rows.begin(), rows.end());
    return m;
}

} // namespace

SnippetMatrix build_snippet_matrix(const std::vector<CallRecord>& records,
                                   const GroupingOptions& options) {
    Tally t;
    tally_records(records, options, t);
    return finalize(std::move(t));
}

SnippetMatrix normalize_rows(SnippetMatrix m) {
    if (m.normalized) return m;
    m.values.resize(m.counts.size());
    for (std::size_t row = 0; row < m.n; ++row) {
        std::int64_t sum = 0;
        for (std::size_t k = m.row_ptr[row]; k < m.row_ptr[row + 1]; ++k) {
            if (m.counts[k] <= 0) throw InternalError("non-positive raw count in row");
            sum += m.counts[k];
        }
        if (sum == 0) throw InternalError("zero row encountered during normalization");
        for (std::size_t k = m.row_ptr[row]; k < m.row_ptr[row + 1]; ++k)
            m.values[k] = double(m.counts[k]) / double(sum);
    }
    m.counts.clear();
    m.normalized = true;
    return m;
}

SnippetMatrix append_rows(const SnippetMatrix& matrix, const std::vector<CallRecord>& new_records,
                          const AppendOptions& options) {
    if (!matrix.normalized) throw InternalError("append_rows requires a normalized matrix");

    Tally t;
    tally_records(new_records, options.grouping, t);

    SnippetMatrix addition = normalize_rows(finalize(std::move(t)));
    SnippetMatrix out = matrix;
    out.grouping_stats.keyable += addition.grouping_stats.keyable;
    out.grouping_stats.skipped_inline += addition.grouping_stats.skipped_inline;
    out.grouping_stats.skipped_bad_host += addition.grouping_stats.skipped_bad_host;
    if (addition.n == 0) return out;

    std::unordered_map<std::string, std::uint32_t> vocab_ids;
    for (std::uint32_t i = 0; i < out.vocabulary.size(); ++i) vocab_ids[out.vocabulary[i]] = i;
    std::vector<std::uint32_t> remap(addition.s);
    for (std::uint32_t i = 0; i < addition.s; ++i) {
        auto [it, fresh] = vocab_ids.try_emplace(addition.vocabulary[i],
                                                 std::uint32_t(out.vocabulary.size()));
        if (fresh) out.vocabulary.push_back(addition.vocabulary[i]);
        remap[i] = it->second;
    }
    out.s = out.vocabulary.size();

    std::unordered_map<std::string, std::uint32_t> existing_keys;
    for (std::uint32_t i = 0; i < out.keys.size(); ++i) existing_keys[out.keys[i].render()] = i;

    for (std::size_t arow = 0; arow < addition.n; ++arow) {
        SnippetKey key = addition.keys[arow];
        if (existing_keys.count(key.render())) {
            if (!options.allow_duplicate_keys)
                throw DataError("append_rows: key already present: " + key.render());
            for (int k = 2;; ++k) {
                SnippetKey candidate = key;
                candidate.func += "~" + std::to_string(k);
                if (!existing_keys.count(candidate.render())) {
                    key = candidate;
                    break;
                }
            }
        }
        std::uint32_t row_id = std::uint32_t(out.n);
        existing_keys[key.render()] = row_id;
        out.keys.push_back(key);

        std::vector<std::pair<std::uint32_t, double>> cells;
        for (std::size_t k = addition.row_ptr[arow]; k < addition.row_ptr[arow + 1]; ++k)
            cells.emplace_back(remap[addition.cols[k]], addition.values[k]);
        std::sort(cells.begin(), cells.end());
        for (const auto& [sym, v] : cells) {
            out.cols.push_back(sym);
            out.values.push_back(v);
        }
        out.row_ptr.push_back(out.cols.size());
        ++out.n;

        for (const auto& [script, rows] : addition.script_index) {
            if (std::binary_search(rows.begin(), rows.end(), std::uint32_t(arow))) {
                auto& target = out.script_index[script];
                if (std::find(target.begin(), target.end(), row_id) == target.end())
                    target.push_back(row_id);
            }
        }
    }
    for (auto& [_, rows] : out.script_index) std::sort(rows.begin(), rows.end());
    return out;
}

void save_matrix(const SnippetMatrix& m, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    {
        std::ofstream out(dir / "vocabulary.tsv", std::ios::binary);
        out << "symbol_id\tsymbol\n";
        for (std::size_t i = 0; i < m.vocabulary.size(); ++i)
            out << i << '\t' << tsv_escape(m.vocabulary[i]) << '\n';
        if (!out) throw DataError("failed writing vocabulary.tsv");
    }
    {
        // One line per (row, contributing clean url); rows with no script
        // association (bucketed inline with unknown location) still get a
        // line with an empty url column.
        std::ofstream out(dir / "keys.tsv", std::ios::binary);
        out << "row_id\tdomain\tfile\tfunc\tclean_script_url\n";
        std::vector<std::vector<const std::string*>> scripts_of(m.n);
        for (const auto& [script, rows] : m.script_index)
            for (std::uint32_t r : rows) scripts_of[r].push_back(&script);
        for (std::size_t r = 0; r < m.n; ++r) {
            const SnippetKey& k = m.keys[r];
            if (scripts_of[r].empty()) {
                out << r << '\t' << tsv_escape(k.domain) << '\t' << tsv_escape(k.file) << '\t'
                    << tsv_escape(k.func) << "\t\n";
                continue;
            }
            for (const std::string* script : scripts_of[r])
                out << r << '\t' << tsv_escape(k.domain) << '\t' << tsv_escape(k.file) << '\t'
                    << tsv_escape(k.func) << '\t' << tsv_escape(*script) << '\n';
        }
        if (!out) throw DataError("failed writing keys.tsv");
    }
    {
        std::ofstream out(dir / "matrix.tsv", std::ios::binary);
        out << "row_id\tsymbol_id\t" << (m.normalized ? "normalized_value" : "count") << '\n';
        for (std::size_t r = 0; r < m.n; ++r) {
            for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
                out << r << '\t' << m.cols[k] << '\t';
                if (m.normalized)
                    out << format_double(m.values[k]);
                else
                    out << m.counts[k];
                out << '\n';
            }
        }
        if (!out) throw DataError("failed writing matrix.tsv");
    }
    {
        nlohmann::json meta;
        meta["n"] = m.n;
        meta["s"] = m.s;
        meta["normalized"] = m.normalized;
        meta["grouping"] = {{"keyable", m.grouping_stats.keyable},
                            {"skipped_inline", m.grouping_stats.skipped_inline},
                            {"skipped_bad_host", m.grouping_stats.skipped_bad_host}};
        std::ofstream out(dir / "meta.json", std::ios::binary);
        out << meta.dump(2) << '\n';
        if (!out) throw DataError("failed writing meta.json");
    }
}

SnippetMatrix load_matrix(const std::filesystem::path& dir) {
    SnippetMatrix m;

    std::ifstream meta_in(dir / "meta.json", std::ios::binary);
    if (!meta_in) throw DataError("missing matrix meta.json under " + dir.string());
    nlohmann::json meta = nlohmann::json::parse(meta_in);
    m.n = meta.at("n").get<std::size_t>();
    m.s = meta.at("s").get<std::size_t>();
    m.normalized = meta.at("normalized").get<bool>();
    if (meta.contains("grouping")) {
        m.grouping_stats.keyable = meta["grouping"].value("keyable", 0ULL);
        m.grouping_stats.skipped_inline = meta["grouping"].value("skipped_inline", 0ULL);
        m.grouping_stats.skipped_bad_host = meta["grouping"].value("skipped_bad_host", 0ULL);
    }

    {
        std::ifstream in(dir / "vocabulary.tsv", std::ios::binary);
        if (!in) throw DataError("missing vocabulary.tsv under " + dir.string());
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split(line, '\t');
            if (f.size() != 2) throw DataError("bad vocabulary.tsv row");
            m.vocabulary.push_back(tsv_unescape(f[1]));
        }
        if (m.vocabulary.size() != m.s) throw DataError("vocabulary.tsv size mismatch with meta");
    }
    {
        std::ifstream in(dir / "keys.tsv", std::ios::binary);
        if (!in) throw DataError("missing keys.tsv under " + dir.string());
        std::string line;
        std::getline(in, line);
        m.keys.resize(m.n);
        std::vector<bool> seen(m.n, false);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split(line, '\t');
            if (f.size() != 5) throw DataError("bad keys.tsv row");
            auto row = parse_int(f[0]);
            if (!row || *row < 0 || std::size_t(*row) >= m.n)
                throw DataError("keys.tsv row id out of range");
            SnippetKey key{tsv_unescape(f[1]), tsv_unescape(f[2]), tsv_unescape(f[3])};
            if (seen[*row] && !(m.keys[*row] == key))
                throw DataError("keys.tsv: conflicting key for row " + f[0]);
            m.keys[*row] = key;
            seen[*row] = true;
            std::string script = tsv_unescape(f[4]);
            if (!script.empty()) m.script_index[script].push_back(std::uint32_t(*row));
        }
        for (std::size_t r = 0; r < m.n; ++r)
            if (!seen[r]) throw DataError("keys.tsv missing row " + std::to_string(r));
        for (auto& [_, rows] : m.script_index) {
            std::sort(rows.begin(), rows.end());
            rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
        }
    }
    {
        std::ifstream in(dir / "matrix.tsv", std::ios::binary);
        if (!in) throw DataError("missing matrix.tsv under " + dir.string());
        std::string line;
        std::getline(in, line);
        std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(m.n);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto f = split(line, '\t');
            if (f.size() != 3) throw DataError("bad matrix.tsv row");
            auto row = parse_int(f[0]);
            auto sym = parse_int(f[1]);
            auto v = parse_double(f[2]);
            if (!row || !sym || !v || std::size_t(*row) >= m.n || std::size_t(*sym) >= m.s)
                throw DataError("matrix.tsv cell out of range");
            if (!std::isfinite(*v)) throw DataError("matrix.tsv cell is not finite");
            rows[*row].emplace_back(std::uint32_t(*sym), *v);
        }
        m.row_ptr.push_back(0);
        for (std::size_t r = 0; r < m.n; ++r) {
            auto& cells = rows[r];
            std::sort(cells.begin(), cells.end());
            for (auto& [sym, v] : cells) {
                m.cols.push_back(sym);
                if (m.normalized)
                    m.values.push_back(v);
                else
                    m.counts.push_back(std::int64_t(v));
            }
            m.row_ptr.push_back(m.cols.size());
        }
    }
    return m;
}

} // namespace fpdetect
