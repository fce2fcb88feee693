#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fpdetect/records.hpp"

namespace fpdetect {

enum class Technique { canvas, canvas_font, webrtc, audio };
enum class HeuristicVariant { en2016, das2018 };
enum class HeuristicOutcome { flagged, not_flagged, not_evaluable };

const char* technique_name(Technique t);
std::optional<Technique> technique_from_name(std::string_view name);
const char* variant_name(HeuristicVariant v);
std::optional<HeuristicVariant> variant_from_name(std::string_view name);

/// Symbol tables and thresholds the detectors run against. The published
/// rules fix the thresholds but not the full symbol inventories, so the
/// inventories ship as versioned config (data/heuristics_default.json,
/// identical to defaults()).
struct HeuristicConfig {
    // canvas
    std::vector<std::string> canvas_write_symbols;
    std::vector<std::string> canvas_read_symbols;
    std::vector<std::string> canvas_style_symbols;
    std::string canvas_width_symbol;
    std::string canvas_height_symbol;
    std::size_t canvas_min_text_length = 10;
    std::size_t canvas_min_styles = 2;
    std::int64_t canvas_min_px = 16; // dimensions must exceed this

    // canvas font
    std::string font_symbol;
    std::string measure_text_symbol;
    std::size_t font_min_distinct_values = 50;
    std::size_t font_min_measure_calls = 50;

    // webrtc
    std::vector<std::string> webrtc_create_symbols;
    std::vector<std::string> webrtc_access_symbols;

    // audio: the restrictive variant requires the full chain, the
    // permissive one only the start symbol (kept inside the chain so the
    // restrictive set is a subset of the permissive one).
    std::string audio_start_symbol;
    std::vector<std::string> audio_chain_symbols;

    static HeuristicConfig defaults();
    static HeuristicConfig from_file(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Per-script aggregation of the signals the detectors consume; one trace
/// covers every record of one raw script_url.
struct ScriptTrace {
    std::vector<std::pair<std::size_t, std::size_t>> write_lengths; // (code points, ascii chars)
    std::size_t writes_without_args = 0;
    std::set<std::string> style_values;
    std::size_t style_sets_without_value = 0;
    std::vector<std::int64_t> width_sets, height_sets;
    bool canvas_read = false;

    std::set<std::string> font_values;
    std::size_t font_sets_without_value = 0;
    std::size_t measure_calls = 0;

    bool webrtc_create = false;
    bool webrtc_access = false;

    std::set<std::string> audio_symbols_seen;
};

ScriptTrace build_script_trace(const std::vector<CallRecord>& script_records,
                               const HeuristicConfig& config);

HeuristicOutcome heuristic_canvas(const ScriptTrace& trace, HeuristicVariant variant,
                                  const HeuristicConfig& config);
HeuristicOutcome heuristic_canvas_font(const ScriptTrace& trace, HeuristicVariant variant,
                                       const HeuristicConfig& config);
HeuristicOutcome heuristic_webrtc(const ScriptTrace& trace, const HeuristicConfig& config);
HeuristicOutcome heuristic_audio(const ScriptTrace& trace, HeuristicVariant variant,
                                 const HeuristicConfig& config);

/// One raw script_url flagged by one technique under one variant.
struct HeuristicFlag {
    std::string script_url; // raw; cleaned during list compilation
    Technique technique;
    HeuristicVariant variant;

    auto operator<=>(const HeuristicFlag&) const = default;
};

struct HeuristicRunResult {
    std::vector<HeuristicFlag> flags;
    // (raw url, technique, variant) combinations that were not evaluable
    std::vector<HeuristicFlag> not_evaluable;
};

/// Evaluates all four techniques for the requested variants, grouping
/// records per raw script_url (inline records are out of scope here).
/// Scripts evaluate independently and in parallel.
HeuristicRunResult run_heuristics(const std::vector<CallRecord>& records,
                                  const HeuristicConfig& config,
                                  const std::vector<HeuristicVariant>& variants, int workers = 0);

/// Deduplicated clean-URL list with per-script technique sets, sorted by
/// URL. Invariant under input flag ordering.
std::vector<std::pair<std::string, std::set<Technique>>> compile_heuristic_list(
    const std::vector<HeuristicFlag>& flags);

// EN-style font-family extraction from a CSS font shorthand value; falls
// back to the whole value when no size token is found.
std::string extract_font_family(std::string_view font_value);

} // namespace fpdetect
