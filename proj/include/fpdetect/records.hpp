#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace fpdetect {

enum class Operation { get, set, call };

const char* operation_name(Operation op);
std::optional<Operation> operation_from_name(std::string_view name);

/// One instrumented JS API access from a crawl log.
struct CallRecord {
    std::string location;   // page or iframe URL, may be empty
    std::string script_url; // empty for inline JS
    std::string func_name;  // empty for anonymous functions
    std::string symbol;     // e.g. "window.navigator.platform", never empty
    Operation operation = Operation::get;
    std::optional<std::string> value;     // absent when the column is missing
    std::optional<std::string> arguments; // serialized argument list
};

enum class InputFormat { jsonl, csv };
std::optional<InputFormat> format_from_name(std::string_view name);

struct ParseStats {
    std::uint64_t total = 0;   // data rows seen (blank lines are not rows)
    std::uint64_t parsed = 0;
    std::uint64_t skipped = 0; // malformed rows; total == parsed + skipped
};

using RecordSink = std::function<void(CallRecord&&)>;

/// Streams validated records from a crawl export. Malformed rows are
/// counted and skipped; a source missing a required column (script_url,
/// func_name, symbol, operation) is a fatal ConfigError naming it.
ParseStats parse_call_records(std::istream& source, InputFormat format, const RecordSink& sink);

// Canonical intermediate form written by the ingest stage. One escaped
// TSV row per record; "\N" marks an absent optional column.
void write_records_tsv(std::ostream& out, const CallRecord& record);
void write_records_tsv_header(std::ostream& out);
ParseStats read_records_tsv(std::istream& in, const RecordSink& sink);

} // namespace fpdetect
