#include "fpdetect/records.hpp"

#include <array>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "fpdetect/errors.hpp"
#include "fpdetect/text.hpp"

namespace fpdetect {

const char* operation_name(Operation op) {
    switch (op) {
        case Operation::get: return "get";
        case Operation::set: return "set";
        case Operation::call: return "call";
    }
    return "?";
}

std::optional<Operation> operation_from_name(std::string_view name) {
    if (name == "get") return Operation::get;
    if (name == "set") return Operation::set;
    if (name == "call") return Operation::call;
    return std::nullopt;
}

std::optional<InputFormat> format_from_name(std::string_view name) {
    if (name == "jsonl") return InputFormat::jsonl;
    if (name == "csv") return InputFormat::csv;
    return std::nullopt;
}

namespace {

constexpr std::array<const char*, 4> kRequiredColumns = {"script_url", "func_name", "symbol",
                                                         "operation"};

ParseStats parse_jsonl(std::istream& source, const RecordSink& sink) {
    ParseStats stats;
    std::string line;
    while (std::getline(source, line)) {
        if (trim(line).empty()) continue;
        ++stats.total;

        nlohmann::json row = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (!row.is_object()) {
            ++stats.skipped;
            continue;
        }
        for (const char* col : kRequiredColumns) {
            if (!row.contains(col))
                throw ConfigError(std::string("input rows are missing required column '") + col +
                                  "'");
        }

        auto str_field = [&](const char* key) -> std::optional<std::string> {
            auto it = row.find(key);
            if (it == row.end() || it->is_null()) return std::nullopt;
            if (it->is_string()) return it->get<std::string>();
            // Anything non-string (numbers, argument arrays, objects)
            // keeps its JSON serialization.
            return it->dump();
        };

        CallRecord rec;
        auto script_url = str_field("script_url");
        auto func_name = str_field("func_name");
        auto symbol = str_field("symbol");
        auto operation = str_field("operation");
        auto op = operation ? operation_from_name(*operation) : std::nullopt;
        if (!script_url || !func_name || !symbol || symbol->empty() || !op) {
            ++stats.skipped;
            continue;
        }
        rec.script_url = std::move(*script_url);
        rec.func_name = std::move(*func_name);
        rec.symbol = std::move(*symbol);
        rec.operation = *op;
        rec.location = str_field("location").value_or("");
        rec.value = str_field("value");
        rec.arguments = str_field("arguments");
        ++stats.parsed;
        sink(std::move(rec));
    }
    return stats;
}

// Minimal RFC 4180 reader: quoted fields may contain separators, quotes
// ("" escape) and newlines. Returns false at end of stream.
bool read_csv_row(std::istream& in, std::vector<std::string>& fields) {
    fields.clear();
    int c = in.get();
    if (c == EOF) return false;
    std::string field;
    bool quoted = false;
    bool any = false;
    while (true) {
        if (c == EOF) {
            fields.push_back(std::move(field));
            return any || !fields.empty();
        }
        any = true;
        char ch = char(c);
        if (quoted) {
            if (ch == '"') {
                int next = in.peek();
                if (next == '"') {
                    in.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\r') {
            // swallow; handled with the following \n (or alone)
            if (in.peek() == '\n') in.get();
            fields.push_back(std::move(field));
            return true;
        } else if (ch == '\n') {
            fields.push_back(std::move(field));
            return true;
        } else {
            field.push_back(ch);
        }
        c = in.get();
    }
}

ParseStats parse_csv(std::istream& source, const RecordSink& sink) {
    std::vector<std::string> header;
    if (!read_csv_row(source, header) || header.empty())
        throw ConfigError("csv input is empty; expected a header row");

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index[std::string(trim(header[i]))] = i;
    for (const char* col : kRequiredColumns) {
        if (!index.count(col))
            throw ConfigError(std::string("csv header is missing required column '") + col + "'");
    }
    auto col = [&](const char* name) -> std::optional<std::size_t> {
        auto it = index.find(name);
        if (it == index.end()) return std::nullopt;
        return it->second;
    };
    const std::size_t c_script = *col("script_url"), c_func = *col("func_name");
    const std::size_t c_symbol = *col("symbol"), c_op = *col("operation");
    const auto c_location = col("location"), c_value = col("value"), c_args = col("arguments");

    ParseStats stats;
    std::vector<std::string> fields;
    while (read_csv_row(source, fields)) {
        if (fields.size() == 1 && trim(fields[0]).empty()) continue;
        ++stats.total;
        if (fields.size() < header.size()) {
            ++stats.skipped;
            continue;
        }
        auto op = operation_from_name(fields[c_op]);
        if (!op || fields[c_symbol].empty()) {
            ++stats.skipped;
            continue;
        }
        CallRecord rec;
        rec.script_url = fields[c_script];
        rec.func_name = fields[c_func];
        rec.symbol = fields[c_symbol];
        rec.operation = *op;
        if (c_location) rec.location = fields[*c_location];
        if (c_value) rec.value = fields[*c_value];
        if (c_args) rec.arguments = fields[*c_args];
        ++stats.parsed;
        sink(std::move(rec));
    }
    return stats;
}

constexpr const char* kAbsent = "\\N";

std::string opt_field(const std::optional<std::string>& v) {
    return v ? tsv_escape(*v) : std::string(kAbsent);
}

} // namespace

ParseStats parse_call_records(std::istream& source, InputFormat format, const RecordSink& sink) {
    if (!source) throw ConfigError("input source is not readable");
    return format == InputFormat::jsonl ? parse_jsonl(source, sink) : parse_csv(source, sink);
}

void write_records_tsv_header(std::ostream& out) {
    out << "location\tscript_url\tfunc_name\tsymbol\toperation\tvalue\targuments\n";
}

void write_records_tsv(std::ostream& out, const CallRecord& r) {
    out << tsv_escape(r.location) << '\t' << tsv_escape(r.script_url) << '\t'
        << tsv_escape(r.func_name) << '\t' << tsv_escape(r.symbol) << '\t'
        << operation_name(r.operation) << '\t' << opt_field(r.value) << '\t'
        << opt_field(r.arguments) << '\n';
}

ParseStats read_records_tsv(std::istream& in, const RecordSink& sink) {
    ParseStats stats;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue; // header
        }
        if (line.empty()) continue;
        ++stats.total;
        auto fields = split(line, '\t');
        if (fields.size() != 7) throw DataError("records.tsv row with wrong column count");
        auto op = operation_from_name(fields[4]);
        if (!op) throw DataError("records.tsv row with bad operation: " + fields[4]);
        CallRecord rec;
        rec.location = tsv_unescape(fields[0]);
        rec.script_url = tsv_unescape(fields[1]);
        rec.func_name = tsv_unescape(fields[2]);
        rec.symbol = tsv_unescape(fields[3]);
        rec.operation = *op;
        if (fields[5] != kAbsent) rec.value = tsv_unescape(fields[5]);
        if (fields[6] != kAbsent) rec.arguments = tsv_unescape(fields[6]);
        ++stats.parsed;
        sink(std::move(rec));
    }
    return stats;
}

} // namespace fpdetect
