#include "fpdetect/heuristics.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <unordered_map>

#include <json.hpp>
#include <omp.h>

#include "fpdetect/errors.hpp"
#include "fpdetect/text.hpp"
#include "fpdetect/url.hpp"

namespace fpdetect {

const char* technique_name(Technique t) {
    switch (t) {
        case Technique::canvas: return "canvas";
        case Technique::canvas_font: return "canvas_font";
        case Technique::webrtc: return "webrtc";
        case Technique::audio: return "audio";
    }
    return "?";
}

std::optional<Technique> technique_from_name(std::string_view name) {
    if (name == "canvas") return Technique::canvas;
    if (name == "canvas_font") return Technique::canvas_font;
    if (name == "webrtc") return Technique::webrtc;
    if (name == "audio") return Technique::audio;
    return std::nullopt;
}

const char* variant_name(HeuristicVariant v) {
    return v == HeuristicVariant::en2016 ? "en2016" : "das2018";
}

std::optional<HeuristicVariant> variant_from_name(std::string_view name) {
    if (name == "en2016") return HeuristicVariant::en2016;
    if (name == "das2018") return HeuristicVariant::das2018;
    return std::nullopt;
}

HeuristicConfig HeuristicConfig::defaults() {
    HeuristicConfig c;
    c.canvas_write_symbols = {"CanvasRenderingContext2D.fillText",
                              "CanvasRenderingContext2D.strokeText"};
    c.canvas_read_symbols = {"HTMLCanvasElement.toDataURL",
                             "CanvasRenderingContext2D.getImageData"};
    c.canvas_style_symbols = {"CanvasRenderingContext2D.fillStyle",
                              "CanvasRenderingContext2D.strokeStyle"};
    c.canvas_width_symbol = "HTMLCanvasElement.width";
    c.canvas_height_symbol = "HTMLCanvasElement.height";

    c.font_symbol = "CanvasRenderingContext2D.font";
    c.measure_text_symbol = "CanvasRenderingContext2D.measureText";

    c.webrtc_create_symbols = {"RTCPeerConnection.createOffer",
                               "RTCPeerConnection.createDataChannel"};
    c.webrtc_access_symbols = {"RTCPeerConnection.onicecandidate",
                               "RTCPeerConnection.localDescription"};

    c.audio_start_symbol = "OscillatorNode.start";
    c.audio_chain_symbols = {"OfflineAudioContext.createOscillator", "OscillatorNode.connect",
                             "OscillatorNode.start", "OfflineAudioContext.startRendering",
                             "OfflineAudioContext.oncomplete"};
    return c;
}

namespace {

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
    std::vector<std::string> out;
    for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
    return out;
}

} // namespace

HeuristicConfig HeuristicConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read heuristic config: " + path.string());
    nlohmann::json j = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw ConfigError("heuristic config is not valid JSON: " + path.string());
    try {
        HeuristicConfig c;
        const auto& canvas = j.at("canvas");
        c.canvas_write_symbols = string_list(canvas, "write_symbols");
        c.canvas_read_symbols = string_list(canvas, "read_symbols");
        c.canvas_style_symbols = string_list(canvas, "style_symbols");
        c.canvas_width_symbol = canvas.at("width_symbol").get<std::string>();
        c.canvas_height_symbol = canvas.at("height_symbol").get<std::string>();
        c.canvas_min_text_length = canvas.at("min_text_length").get<std::size_t>();
        c.canvas_min_styles = canvas.at("min_styles").get<std::size_t>();
        c.canvas_min_px = canvas.at("min_canvas_px").get<std::int64_t>();

        const auto& font = j.at("canvas_font");
        c.font_symbol = font.at("font_symbol").get<std::string>();
        c.measure_text_symbol = font.at("measure_symbol").get<std::string>();
        c.font_min_distinct_values = font.at("min_distinct_values").get<std::size_t>();
        c.font_min_measure_calls = font.at("min_measure_calls").get<std::size_t>();

        const auto& webrtc = j.at("webrtc");
        c.webrtc_create_symbols = string_list(webrtc, "create_symbols");
        c.webrtc_access_symbols = string_list(webrtc, "access_symbols");

        const auto& audio = j.at("audio");
        c.audio_start_symbol = audio.at("start_symbol").get<std::string>();
        c.audio_chain_symbols = string_list(audio, "chain_symbols");
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("heuristic config " + path.string() + ": " + e.what());
    }
}

std::string HeuristicConfig::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["canvas"] = {{"write_symbols", canvas_write_symbols},
                   {"read_symbols", canvas_read_symbols},
                   {"style_symbols", canvas_style_symbols},
                   {"width_symbol", canvas_width_symbol},
                   {"height_symbol", canvas_height_symbol},
                   {"min_text_length", canvas_min_text_length},
                   {"min_styles", canvas_min_styles},
                   {"min_canvas_px", canvas_min_px}};
    j["canvas_font"] = {{"font_symbol", font_symbol},
                        {"measure_symbol", measure_text_symbol},
                        {"min_distinct_values", font_min_distinct_values},
                        {"min_measure_calls", font_min_measure_calls}};
    j["webrtc"] = {{"create_symbols", webrtc_create_symbols},
                   {"access_symbols", webrtc_access_symbols}};
    j["audio"] = {{"start_symbol", audio_start_symbol}, {"chain_symbols", audio_chain_symbols}};
    return j.dump(2) + "\n";
}

namespace {

bool contains(const std::vector<std::string>& haystack, const std::string& needle) {
    return std::find(haystack.begin(), haystack.end(), needle) != haystack.end();
}

// The argument list arrives serialized; a JSON array's first element is
// the written text, anything else is taken verbatim.
std::string written_text(const std::string& arguments) {
    nlohmann::json parsed = nlohmann::json::parse(arguments, nullptr, false);
    if (parsed.is_array() && !parsed.empty()) {
        const auto& first = parsed[0];
        if (first.is_string()) return first.get<std::string>();
        if (first.is_number() || first.is_boolean()) return first.dump();
        return "";
    }
    return arguments;
}

std::optional<std::int64_t> leading_int(const std::string& value) {
    std::size_t i = 0;
    while (i < value.size() && (std::isdigit((unsigned char)value[i]) || value[i] == '-')) ++i;
    return parse_int(std::string_view(value).substr(0, i));
}

} // namespace

std::string extract_font_family(std::string_view font_value) {
    static const std::regex size_then_family(
        R"((?:^|\s)[0-9]+(?:\.[0-9]+)?(?:px|pt|pc|em|rem|%|in|cm|mm|ex|ch|vw|vh)(?:\s*/\s*[^\s]+)?\s+(.+)$)",
        std::regex::icase);
    std::match_results<std::string_view::const_iterator> m;
    if (std::regex_search(font_value.begin(), font_value.end(), m, size_then_family))
        return std::string(trim(std::string_view(&*m[1].first, std::size_t(m[1].length()))));
    return std::string(trim(font_value));
}

ScriptTrace build_script_trace(const std::vector<CallRecord>& records,
                               const HeuristicConfig& cfg) {
    ScriptTrace t;
    for (const CallRecord& r : records) {
        if (contains(cfg.canvas_write_symbols, r.symbol) && r.operation == Operation::call) {
            if (!r.arguments) {
                ++t.writes_without_args;
            } else {
                std::string text = written_text(*r.arguments);
                t.write_lengths.emplace_back(utf8_length(text), ascii_only(text).size());
            }
        }
        if (contains(cfg.canvas_read_symbols, r.symbol)) t.canvas_read = true;
        if (contains(cfg.canvas_style_symbols, r.symbol)) {
            if (r.value)
                t.style_values.insert(*r.value);
            else
                ++t.style_sets_without_value;
        }
        if (r.symbol == cfg.canvas_width_symbol && r.operation == Operation::set && r.value) {
            if (auto px = leading_int(*r.value)) t.width_sets.push_back(*px);
        }
        if (r.symbol == cfg.canvas_height_symbol && r.operation == Operation::set && r.value) {
            if (auto px = leading_int(*r.value)) t.height_sets.push_back(*px);
        }

        if (r.symbol == cfg.font_symbol && r.operation == Operation::set) {
            if (r.value)
                t.font_values.insert(*r.value);
            else
                ++t.font_sets_without_value;
        }
        if (r.symbol == cfg.measure_text_symbol && r.operation == Operation::call)
            ++t.measure_calls;

        if (contains(cfg.webrtc_create_symbols, r.symbol)) t.webrtc_create = true;
        if (contains(cfg.webrtc_access_symbols, r.symbol)) t.webrtc_access = true;

        if (r.symbol == cfg.audio_start_symbol || contains(cfg.audio_chain_symbols, r.symbol))
            t.audio_symbols_seen.insert(r.symbol);
    }
    return t;
}

HeuristicOutcome heuristic_canvas(const ScriptTrace& t, HeuristicVariant variant,
                                  const HeuristicConfig& cfg) {
    if (!t.canvas_read) return HeuristicOutcome::not_flagged;

    if (variant == HeuristicVariant::das2018) {
        // write of >= N characters after dropping non-ASCII, plus a read.
        bool text_ok = std::any_of(t.write_lengths.begin(), t.write_lengths.end(),
                                   [&](auto& wl) { return wl.second >= cfg.canvas_min_text_length; });
        if (text_ok) return HeuristicOutcome::flagged;
        return t.writes_without_args > 0 ? HeuristicOutcome::not_evaluable
                                         : HeuristicOutcome::not_flagged;
    }

    // en2016: >= N characters (no ASCII filtering) AND >= 2 distinct
    // styles AND canvas dimensions above the pixel floor.
    bool chars_ok = std::any_of(t.write_lengths.begin(), t.write_lengths.end(),
                                [&](auto& wl) { return wl.first >= cfg.canvas_min_text_length; });
    bool styles_ok = t.style_values.size() >= cfg.canvas_min_styles;
    auto dim_ok = [&](const std::vector<std::int64_t>& sets) {
        if (sets.empty()) return true; // never resized; default canvas is 300x150
        return *std::max_element(sets.begin(), sets.end()) > cfg.canvas_min_px;
    };
    bool size_ok = dim_ok(t.width_sets) && dim_ok(t.height_sets);
    if (!size_ok) return HeuristicOutcome::not_flagged;
    if (chars_ok && styles_ok) return HeuristicOutcome::flagged;

    bool chars_unknowable = !chars_ok && t.writes_without_args > 0;
    bool styles_unknowable = !styles_ok && t.style_sets_without_value > 0;
    if ((chars_ok || chars_unknowable) && (styles_ok || styles_unknowable))
        return HeuristicOutcome::not_evaluable;
    return HeuristicOutcome::not_flagged;
}

HeuristicOutcome heuristic_canvas_font(const ScriptTrace& t, HeuristicVariant variant,
                                       const HeuristicConfig& cfg) {
    if (t.measure_calls < cfg.font_min_measure_calls) return HeuristicOutcome::not_flagged;

    std::size_t distinct;
    if (variant == HeuristicVariant::das2018) {
        distinct = t.font_values.size();
    } else {
        std::set<std::string> families;
        for (const std::string& v : t.font_values) families.insert(extract_font_family(v));
        distinct = families.size();
    }
    if (distinct >= cfg.font_min_distinct_values) return HeuristicOutcome::flagged;
    if (distinct + t.font_sets_without_value >= cfg.font_min_distinct_values)
        return HeuristicOutcome::not_evaluable;
    return HeuristicOutcome::not_flagged;
}

HeuristicOutcome heuristic_webrtc(const ScriptTrace& t, const HeuristicConfig&) {
    return (t.webrtc_create && t.webrtc_access) ? HeuristicOutcome::flagged
                                                : HeuristicOutcome::not_flagged;
}

HeuristicOutcome heuristic_audio(const ScriptTrace& t, HeuristicVariant variant,
                                 const HeuristicConfig& cfg) {
    if (variant == HeuristicVariant::en2016) {
        return t.audio_symbols_seen.count(cfg.audio_start_symbol) ? HeuristicOutcome::flagged
                                                                  : HeuristicOutcome::not_flagged;
    }
    for (const std::string& sym : cfg.audio_chain_symbols)
        if (!t.audio_symbols_seen.count(sym)) return HeuristicOutcome::not_flagged;
    return HeuristicOutcome::flagged;
}

HeuristicRunResult run_heuristics(const std::vector<CallRecord>& records,
                                  const HeuristicConfig& cfg,
                                  const std::vector<HeuristicVariant>& variants, int workers) {
    // group record indices per raw script_url
    std::unordered_map<std::string, std::vector<std::size_t>> by_script;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].script_url.empty()) continue;
        by_script[records[i].script_url].push_back(i);
    }
    std::vector<const std::string*> scripts;
    scripts.reserve(by_script.size());
    for (const auto& [url, _] : by_script) scripts.push_back(&url);
    std::sort(scripts.begin(), scripts.end(),
              [](const std::string* a, const std::string* b) { return *a < *b; });

    const int w = workers > 0 ? workers : omp_get_max_threads();
    std::vector<HeuristicRunResult> partial(scripts.size());

#pragma omp parallel for schedule(dynamic, 16) num_threads(w)
    for (std::ptrdiff_t i = 0; i < std::ptrdiff_t(scripts.size()); ++i) {
        const std::string& url = *scripts[std::size_t(i)];
        std::vector<CallRecord> group;
        for (std::size_t idx : by_script.at(url)) group.push_back(records[idx]);
        ScriptTrace trace = build_script_trace(group, cfg);

        auto note = [&](Technique tech, HeuristicVariant v, HeuristicOutcome outcome) {
            if (outcome == HeuristicOutcome::flagged)
                partial[std::size_t(i)].flags.push_back({url, tech, v});
            else if (outcome == HeuristicOutcome::not_evaluable)
                partial[std::size_t(i)].not_evaluable.push_back({url, tech, v});
        };
        for (HeuristicVariant v : variants) {
            note(Technique::canvas, v, heuristic_canvas(trace, v, cfg));
            note(Technique::canvas_font, v, heuristic_canvas_font(trace, v, cfg));
            note(Technique::webrtc, v, heuristic_webrtc(trace, cfg));
            note(Technique::audio, v, heuristic_audio(trace, v, cfg));
        }
    }

    HeuristicRunResult result;
    for (auto& p : partial) {
        result.flags.insert(result.flags.end(), p.flags.begin(), p.flags.end());
        result.not_evaluable.insert(result.not_evaluable.end(), p.not_evaluable.begin(),
                                    p.not_evaluable.end());
    }
    return result;
}

std::vector<std::pair<std::string, std::set<Technique>>> compile_heuristic_list(
    const std::vector<HeuristicFlag>& flags) {
    std::map<std::string, std::set<Technique>> by_clean;
    for (const HeuristicFlag& f : flags) by_clean[clean_script_url(f.script_url)].insert(f.technique);
    return {by_clean.begin(), by_clean.end()};
}

} // namespace fpdetect
