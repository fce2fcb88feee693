#include <doctest.h>

#include <algorithm>
#include <random>

#include <json.hpp>

#include "fpdetect/heuristics.hpp"
#include "test_util.hpp"

using namespace fpdetect;
using namespace fpdetect::testutil;

namespace {

const HeuristicConfig& cfg() {
    static HeuristicConfig c = HeuristicConfig::defaults();
    return c;
}

std::vector<CallRecord> canvas_script(const std::string& text, int styles, bool read,
                                      std::optional<int> size_px = std::nullopt) {
    std::vector<CallRecord> r;
    r.push_back(rec("a.com/x.js", "f", "CanvasRenderingContext2D.fillText", Operation::call,
                    std::nullopt, "[" + nlohmann::json(text).dump() + ",2,2]"));
    for (int i = 0; i < styles; ++i)
        r.push_back(rec("a.com/x.js", "f", "CanvasRenderingContext2D.fillStyle", Operation::set,
                        "rgb(" + std::to_string(i) + ",0,0)"));
    if (read)
        r.push_back(rec("a.com/x.js", "f", "HTMLCanvasElement.toDataURL", Operation::call,
                        std::nullopt, "[]"));
    if (size_px) {
        r.push_back(rec("a.com/x.js", "f", "HTMLCanvasElement.width", Operation::set,
                        std::to_string(*size_px)));
        r.push_back(rec("a.com/x.js", "f", "HTMLCanvasElement.height", Operation::set,
                        std::to_string(*size_px)));
    }
    return r;
}

ScriptTrace trace_of(const std::vector<CallRecord>& records) {
    return build_script_trace(records, cfg());
}

} // namespace

TEST_CASE("defaults match the shipped heuristics_default.json") {
    auto from_file =
        HeuristicConfig::from_file(std::string(FPDETECT_DATA_DIR) + "/heuristics_default.json");
    CHECK(from_file.to_json() == HeuristicConfig::defaults().to_json());
}

TEST_CASE("canvas: ten ascii characters plus readback flags both variants") {
    auto t = trace_of(canvas_script("ABCDEFGHIJ", 2, true));
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::flagged);
    CHECK(heuristic_canvas(t, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::flagged);
}

TEST_CASE("canvas: a short integer string is not flagged") {
    auto t = trace_of(canvas_script("23", 2, true));
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::not_flagged);
    CHECK(heuristic_canvas(t, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::not_flagged);
}

TEST_CASE("canvas: no readback means no flag") {
    auto t = trace_of(canvas_script("ABCDEFGHIJKL", 2, false));
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::not_flagged);
    CHECK(heuristic_canvas(t, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::not_flagged);
}

TEST_CASE("canvas: non-ascii filtering splits the variants") {
    // 9 ascii + 5 emoji: 14 code points for en2016, 9 ascii chars for das2018
    std::string text = "ABCDEFGHI";
    for (int i = 0; i < 5; ++i) text += "\xF0\x9F\x98\x80";
    auto t = trace_of(canvas_script(text, 2, true));
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::not_flagged);
    CHECK(heuristic_canvas(t, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::flagged);
}

TEST_CASE("canvas: the single-style requirement splits the variants") {
    auto t = trace_of(canvas_script("ABCDEFGHIJKL", 1, true));
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::flagged);
    CHECK(heuristic_canvas(t, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::not_flagged);
}

TEST_CASE("canvas: the 16px size floor splits the variants") {
    auto t = trace_of(canvas_script("ABCDEFGHIJKL", 2, true, 16));
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::flagged);
    CHECK(heuristic_canvas(t, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::not_flagged);

    auto big = trace_of(canvas_script("ABCDEFGHIJKL", 2, true, 2000));
    CHECK(heuristic_canvas(big, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::flagged);
}

TEST_CASE("canvas: writes without an arguments column are not evaluable") {
    std::vector<CallRecord> r = {
        rec("a.com/x.js", "f", "CanvasRenderingContext2D.fillText", Operation::call),
        rec("a.com/x.js", "f", "HTMLCanvasElement.toDataURL", Operation::call),
    };
    auto t = trace_of(r);
    CHECK(heuristic_canvas(t, HeuristicVariant::das2018, cfg()) ==
          HeuristicOutcome::not_evaluable);
}

TEST_CASE("canvas font: the 50-distinct-values boundary") {
    auto script = [&](int distinct, int measures) {
        std::vector<CallRecord> r;
        for (int i = 0; i < distinct; ++i)
            r.push_back(rec("a.com/x.js", "f", "CanvasRenderingContext2D.font", Operation::set,
                            "12px Font" + std::to_string(i)));
        for (int i = 0; i < measures; ++i)
            r.push_back(rec("a.com/x.js", "f", "CanvasRenderingContext2D.measureText",
                            Operation::call, std::nullopt, "[\"mmm\"]"));
        return trace_of(r);
    };
    for (HeuristicVariant v : {HeuristicVariant::das2018, HeuristicVariant::en2016}) {
        CHECK(heuristic_canvas_font(script(50, 50), v, cfg()) == HeuristicOutcome::flagged);
        CHECK(heuristic_canvas_font(script(49, 50), v, cfg()) == HeuristicOutcome::not_flagged);
        CHECK(heuristic_canvas_font(script(50, 49), v, cfg()) == HeuristicOutcome::not_flagged);
    }
}

TEST_CASE("canvas font: family extraction can drop the distinct count") {
    // 50 distinct values, but two differ only in size: das2018 counts 50,
    // en2016 counts 49 families.
    std::vector<CallRecord> r;
    r.push_back(
        rec("a.com/x.js", "f", "CanvasRenderingContext2D.font", Operation::set, "10px Arial"));
    r.push_back(
        rec("a.com/x.js", "f", "CanvasRenderingContext2D.font", Operation::set, "12px Arial"));
    for (int i = 0; i < 48; ++i)
        r.push_back(rec("a.com/x.js", "f", "CanvasRenderingContext2D.font", Operation::set,
                        "12px Font" + std::to_string(i)));
    for (int i = 0; i < 50; ++i)
        r.push_back(rec("a.com/x.js", "f", "CanvasRenderingContext2D.measureText",
                        Operation::call, std::nullopt, "[\"mmm\"]"));
    auto t = trace_of(r);
    CHECK(heuristic_canvas_font(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::flagged);
    CHECK(heuristic_canvas_font(t, HeuristicVariant::en2016, cfg()) ==
          HeuristicOutcome::not_flagged);

    // with a 50th distinct family, both agree
    r.push_back(
        rec("a.com/x.js", "f", "CanvasRenderingContext2D.font", Operation::set, "12px Font48"));
    auto t2 = trace_of(r);
    CHECK(heuristic_canvas_font(t2, HeuristicVariant::en2016, cfg()) == HeuristicOutcome::flagged);
}

TEST_CASE("font family extraction") {
    CHECK(extract_font_family("12px Arial") == "Arial");
    CHECK(extract_font_family("italic bold 12px/30px Georgia, serif") == "Georgia, serif");
    CHECK(extract_font_family("Arial") == "Arial"); // no size token
    CHECK(extract_font_family("10.5pt 'Helvetica Neue'") == "'Helvetica Neue'");
}

TEST_CASE("webrtc: offer creation plus candidate/description access") {
    std::vector<CallRecord> full = {
        rec("a.com/x.js", "f", "RTCPeerConnection.createOffer", Operation::call),
        rec("a.com/x.js", "f", "RTCPeerConnection.onicecandidate", Operation::set),
        rec("a.com/x.js", "f", "RTCPeerConnection.localDescription", Operation::get),
    };
    CHECK(heuristic_webrtc(trace_of(full), cfg()) == HeuristicOutcome::flagged);

    CHECK(heuristic_webrtc(trace_of({rec("a.com/x.js", "f", "window.navigator")}), cfg()) ==
          HeuristicOutcome::not_flagged);

    std::vector<CallRecord> channel_only = {
        rec("a.com/x.js", "f", "RTCPeerConnection.createDataChannel", Operation::call)};
    CHECK(heuristic_webrtc(trace_of(channel_only), cfg()) == HeuristicOutcome::not_flagged);
}

TEST_CASE("audio: start-only splits the variants, the full chain satisfies both") {
    std::vector<CallRecord> start_only = {
        rec("a.com/x.js", "f", "OscillatorNode.start", Operation::call)};
    CHECK(heuristic_audio(trace_of(start_only), HeuristicVariant::en2016, cfg()) ==
          HeuristicOutcome::flagged);
    CHECK(heuristic_audio(trace_of(start_only), HeuristicVariant::das2018, cfg()) ==
          HeuristicOutcome::not_flagged);

    std::vector<CallRecord> chain;
    for (const std::string& sym : cfg().audio_chain_symbols)
        chain.push_back(rec("a.com/x.js", "f", sym, Operation::call));
    CHECK(heuristic_audio(trace_of(chain), HeuristicVariant::en2016, cfg()) ==
          HeuristicOutcome::flagged);
    CHECK(heuristic_audio(trace_of(chain), HeuristicVariant::das2018, cfg()) ==
          HeuristicOutcome::flagged);

    CHECK(heuristic_audio(trace_of({}), HeuristicVariant::en2016, cfg()) ==
          HeuristicOutcome::not_flagged);
    CHECK(heuristic_audio(trace_of({}), HeuristicVariant::das2018, cfg()) ==
          HeuristicOutcome::not_flagged);
}

TEST_CASE("audio monotonicity: das2018 implies en2016 under default config") {
    std::mt19937_64 rng(3);
    std::vector<std::string> pool = cfg().audio_chain_symbols;
    pool.push_back("window.navigator");
    for (int i = 0; i < 200; ++i) {
        std::vector<CallRecord> r;
        for (const std::string& sym : pool)
            if (rng() % 2) r.push_back(rec("a.com/x.js", "f", sym, Operation::call));
        auto t = trace_of(r);
        if (heuristic_audio(t, HeuristicVariant::das2018, cfg()) == HeuristicOutcome::flagged)
            CHECK(heuristic_audio(t, HeuristicVariant::en2016, cfg()) ==
                  HeuristicOutcome::flagged);
    }
}

TEST_CASE("compile_heuristic_list cleans, deduplicates and ignores flag order") {
    std::vector<HeuristicFlag> flags;
    for (int i = 0; i < 971; ++i)
        flags.push_back({"https://m.stripe.network/inner.html?q=" + std::to_string(i),
                         Technique::canvas_font, HeuristicVariant::das2018});
    flags.push_back({"https://other.com/fp.js", Technique::canvas, HeuristicVariant::das2018});
    flags.push_back({"http://other.com/fp.js#x", Technique::audio, HeuristicVariant::das2018});

    auto list = compile_heuristic_list(flags);
    REQUIRE(list.size() == 2);
    CHECK(list[0].first == "m.stripe.network/inner.html");
    CHECK(list[0].second == std::set<Technique>{Technique::canvas_font});
    CHECK(list[1].first == "other.com/fp.js");
    CHECK(list[1].second == std::set<Technique>{Technique::canvas, Technique::audio});

    std::mt19937_64 rng(9);
    std::shuffle(flags.begin(), flags.end(), rng);
    CHECK(compile_heuristic_list(flags) == list);

    CHECK(compile_heuristic_list({}).empty());
}

TEST_CASE("run_heuristics groups per raw url and skips inline records") {
    std::vector<CallRecord> records = canvas_script("ABCDEFGHIJ", 2, true); // a.com/x.js
    for (auto r : canvas_script("short", 2, true)) {
        r.script_url = "b.com/y.js";
        records.push_back(r);
    }
    records.push_back(rec("c.com/z.js", "f", "OscillatorNode.start", Operation::call));
    records.push_back(rec("", "inline_fn", "OscillatorNode.start", Operation::call));

    auto result = run_heuristics(records, cfg(),
                                 {HeuristicVariant::en2016, HeuristicVariant::das2018}, 2);
    std::set<std::string> canvas_flagged, audio_flagged;
    for (const HeuristicFlag& f : result.flags) {
        if (f.technique == Technique::canvas) canvas_flagged.insert(f.script_url);
        if (f.technique == Technique::audio) audio_flagged.insert(f.script_url);
    }
    CHECK(canvas_flagged == std::set<std::string>{"a.com/x.js"});
    CHECK(audio_flagged == std::set<std::string>{"c.com/z.js"});
}
