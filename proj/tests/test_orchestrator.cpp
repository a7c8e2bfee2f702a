#include "shanks/errors.hpp"
#include "shanks/orchestrator.hpp"

#include <doctest.h>

using namespace shanks;

namespace {

// Words w1..wn with word j ending at ends[j-1].
std::vector<WordTiming> words_ending(std::vector<double> ends)
{
    std::vector<WordTiming> out;
    double prev = 0.0;
    for (std::size_t i = 0; i < ends.size(); ++i) {
        out.push_back({"w" + std::to_string(i + 1), prev, ends[i]});
        prev = ends[i];
    }
    return out;
}

Scenario scenario(std::vector<double> ends)
{
    Scenario s;
    s.id = "test";
    s.words = words_ending(std::move(ends));
    return s;
}

Script script(std::initializer_list<std::string_view> steps)
{
    Script out;
    int n = 0;
    for (auto s : steps) out.push_back({++n, tokenize(s)});
    return out;
}

SessionConfig no_preamble()
{
    SessionConfig c;
    c.include_preamble = false;
    return c;
}

// Records every request so contexts can be compared with the trace.
class RecordingBackend final : public Backend {
public:
    explicit RecordingBackend(Script s) : inner_(std::move(s)) {}
    GenerationResult generate(const GenerationRequest& r) override
    {
        requests.push_back(r);
        return inner_.generate(r);
    }
    std::vector<GenerationRequest> requests;

private:
    ScriptedBackend inner_;
};

class FailingBackend final : public Backend {
public:
    GenerationResult generate(const GenerationRequest&) override { throw TransportError("connection refused", true); }
};

template <typename T>
std::vector<const T*> events_of(const TurnTrace& t)
{
    std::vector<const T*> out;
    for (const auto& e : t.events)
        if (const auto* x = std::get_if<T>(&e)) out.push_back(x);
    return out;
}

std::string kinds(const TurnTrace& t)
{
    std::string out;
    for (const auto& e : t.events) {
        if (std::holds_alternative<ChunkDelivered>(e)) out += "S";
        if (std::holds_alternative<ThinkingGenerated>(e)) out += "R";
        if (std::holds_alternative<ToolExchange>(e)) out += "T";
        if (std::holds_alternative<ResponseEmitted>(e)) out += "O";
        if (std::holds_alternative<ContextRebuilt>(e)) out += "|";
    }
    return out;
}

GroundTruthCall gt(int id, std::string name, nlohmann::json args, std::string response)
{
    GroundTruthCall c;
    c.id = id;
    c.name = std::move(name);
    c.arguments = args.is_null() ? nlohmann::json::object() : std::move(args);
    c.response = std::move(response);
    return c;
}

} // namespace

TEST_CASE("context of a one-chunk turn")
{
    SpeechChunk c;
    c.words = {{"hi", 0, 0.5}, {"there", 0.5, 1}};
    c.is_final = true;
    const std::vector<TraceEvent> ev{ChunkDelivered{1.0, c}};
    CHECK(build_context(ev) == Tokens{"hi", "there", "[EOA]"});
}

TEST_CASE("context interleaves speech and thinking")
{
    SpeechChunk s1, s2;
    s1.words = {{"a", 0, 1}, {"b", 1, 2}};
    s2.index = 2;
    s2.words = {{"c", 4, 5}};
    ThinkingChunk r1;
    r1.tokens = {"<think>", "x", "</think>"};
    const std::vector<TraceEvent> ev{ChunkDelivered{4, s1}, ThinkingGenerated{r1}, ChunkDelivered{8, s2}};
    CHECK(build_context(ev) == Tokens{"a", "b", "[EOPA]", "<think>", "x", "</think>", "c", "[EOPA]"});
}

TEST_CASE("empty prefix gives only the preamble")
{
    CHECK(build_context({}).empty());
    CHECK(build_context({}, {"sys"}) == Tokens{"sys"});
}

TEST_CASE("three chunks without interruption")
{
    auto s = scenario({2.0, 5.0, 9.5});
    RecordingBackend b(script({"one </think>", "two </think>", "three </think>", "answer"}));
    ToolEnvironment env;
    const auto t = run_shanks(s, b, env, no_preamble());
    CHECK(kinds(t) == "SRSRSRO");
    CHECK_FALSE(t.interrupted_at);
    CHECK_FALSE(t.t_interrupt);
    CHECK(t.status == TraceStatus::Completed);
    CHECK(t.eoa_time == 12.0);

    const auto delivered = events_of<ChunkDelivered>(t);
    const auto thinking = events_of<ThinkingGenerated>(t);
    for (int i = 0; i < 3; ++i) {
        CHECK(delivered[i]->time == 4.0 * (i + 1));
        CHECK(thinking[i]->chunk.start_time == 4.0 * (i + 1));
        CHECK(thinking[i]->chunk.tokens.back() == "</think>");
        CHECK(thinking[i]->chunk.after_end_of_audio == (i == 2));
    }
    CHECK(delivered[2]->chunk.is_final);
    CHECK(t.response()->tokens == Tokens{"answer"});
    // R_3 emitted <think> three </think>; O follows one token later.
    CHECK(t.response()->emit_time == 12.0 + 4.0 / 80.0);
    CHECK(t.post_turn_tokens == 3 + 1);

    // Each request context is the trace prefix plus the open block.
    REQUIRE(b.requests.size() == 4);
    std::size_t seen = 0;
    for (std::size_t e = 0; e <= t.events.size(); ++e) {
        if (seen == 4) break;
        const std::span<const TraceEvent> prefix(t.events.data(), e);
        auto ctx = build_context(prefix);
        if (seen < 3 && e > 0 && std::holds_alternative<ChunkDelivered>(t.events[e - 1])) {
            ctx.push_back("<think>");
            CHECK(b.requests[seen].context == ctx);
            ++seen;
        } else if (seen == 3 && e == t.events.size() - 1) {
            CHECK(b.requests[seen].context == ctx);
            ++seen;
        }
    }
    CHECK(seen == 4);
}

TEST_CASE("interrupt in R2 of five chunks")
{
    auto s = scenario({3, 7, 11, 15, 18});
    ToolEnvironment env;
    ScriptedBackend b(script({"fine </think>", "wait that is wrong [INTERRUPT] </think>", "Sorry, you said w2?"}));
    const auto t = run_shanks(s, b, env, no_preamble());
    CHECK(kinds(t) == "SRSRO");
    CHECK(t.interrupted_at == 2);
    const auto delivered = events_of<ChunkDelivered>(t);
    REQUIRE(delivered.size() == 2);
    CHECK(delivered[1]->chunk.index == 2);
    REQUIRE(t.undelivered_overlap);
    CHECK(t.undelivered_overlap->index == 3);
    CHECK(t.undelivered_overlap->words.front().text == "w3");
    const auto r2 = events_of<ThinkingGenerated>(t)[1]->chunk;
    CHECK(r2.contains_interrupt);
    CHECK(r2.generated_tokens() == 7);
    CHECK(*t.t_interrupt == doctest::Approx(8.0 + 8.0 / 80.0).epsilon(1e-12));
    CHECK(t.post_turn_tokens == 0);
    CHECK_FALSE(t.eoa_time);
}

TEST_CASE("interrupt in the last chunk leaves no overlap")
{
    auto s = scenario({3, 6});
    ToolEnvironment env;
    ScriptedBackend b(script({"[INTERRUPT] </think>", "stop"}));
    const auto t = run_shanks(s, b, env, no_preamble());
    CHECK(t.interrupted_at == 1);
    REQUIRE(t.undelivered_overlap);
    CHECK(t.undelivered_overlap->is_final);

    auto one = scenario({3.0});
    ScriptedBackend b2(script({"[INTERRUPT] </think>", "hm"}));
    ToolEnvironment env2;
    const auto t2 = run_shanks(one, b2, env2, no_preamble());
    // After end of audio the marker is plain thinking text.
    CHECK_FALSE(t2.interrupted_at);
    CHECK(kinds(t2) == "SRO");
}

TEST_CASE("turn shorter than one chunk")
{
    auto s = scenario({1.0, 2.5});
    ToolEnvironment env;
    ScriptedBackend b(script({"ok </think>", "hello"}));
    const auto t = run_shanks(s, b, env, no_preamble());
    CHECK(kinds(t) == "SRO");
    const auto d = events_of<ChunkDelivered>(t);
    CHECK(d[0]->chunk.is_final);
    CHECK(events_of<ThinkingGenerated>(t)[0]->chunk.after_end_of_audio);
}

TEST_CASE("budget truncation closes the block")
{
    auto s = scenario({3, 6});
    std::string longer;
    for (int i = 0; i < 400; ++i) longer += "x ";
    ToolEnvironment env;
    ScriptedBackend b(script({longer, "done </think>", "ok"}));
    const auto t = run_shanks(s, b, env, no_preamble());
    const auto r1 = events_of<ThinkingGenerated>(t)[0]->chunk;
    CHECK(r1.truncated);
    CHECK(r1.tokens.size() == 320 + 2);
    CHECK(r1.tokens.back() == "</think>");
    CHECK(r1.end_time == 4.0 + 322.0 / 80.0);
    CHECK_FALSE(events_of<ThinkingGenerated>(t)[1]->chunk.truncated);
}

TEST_CASE("tool responses are spliced and exempt from the budget")
{
    auto s = scenario({3, 6});
    s.ground_truth_calls = {gt(1, "Lookup", {{"q", "w1"}}, "a long result with many words in it")};
    auto env = make_environment(s);
    ScriptedBackend b(script({R"(<tool_call> {"name":"Lookup","arguments":{"q":"w1"}} </tool_call>)", "got it </think>",
                              "done </think>", "answer"}));
    SessionConfig c = no_preamble();
    c.chunking.n_tps = 2.0; // budget 8: call (3 tokens) + 3 more
    const auto t = run_shanks(s, b, env, c);
    REQUIRE(t.status == TraceStatus::Completed);
    CHECK(kinds(t) == "STRSRO");
    const auto ex = events_of<ToolExchange>(t)[0];
    CHECK(ex->outcome.matched == 1);
    CHECK(ex->outcome.phase == CallPhase::Early);
    CHECK(ex->time == 4.0 + 4.0 / 2.0);
    const auto r1 = events_of<ThinkingGenerated>(t)[0]->chunk;
    CHECK(r1.injected_tool_tokens == 8);
    CHECK(r1.generated_tokens() == 1 + 3 + 3);
    CHECK_FALSE(r1.truncated);
    REQUIRE(r1.splices.size() == 1);
    CHECK(r1.tokens[r1.splices[0].offset] == "a");
}

TEST_CASE("malformed calls receive the generic error")
{
    auto s = scenario({3.0});
    s.ground_truth_calls = {gt(1, "Lookup", {}, "r")};
    auto env = make_environment(s);
    ScriptedBackend b(script({"<tool_call> not json </tool_call>", "</think>", "ok"}));
    const auto t = run_shanks(s, b, env, no_preamble());
    const auto ex = events_of<ToolExchange>(t);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0]->malformed);
    CHECK(ex[0]->outcome.is_error);
    CHECK(contains(events_of<ThinkingGenerated>(t)[0]->chunk.tokens, "Error:"));
}

TEST_CASE("call-after-listen makes every call late")
{
    auto s = scenario({2, 5, 9});
    s.ground_truth_calls = {gt(1, "A", {}, "ra"), gt(2, "B", {}, "rb")};
    auto env = make_environment(s);
    ScriptedBackend b(script({R"(<tool_call> {"name":"A","arguments":{}} </tool_call>)",
                              R"(<tool_call> {"name":"B","arguments":{}} </tool_call>)", "both done </think>", "the answer"}));
    const auto t = run_call_after_listen(s, b, env, no_preamble());
    CHECK(t.status == TraceStatus::Completed);
    CHECK(kinds(t) == "STTRO");
    CHECK(events_of<ChunkDelivered>(t)[0]->time == 9.0);
    for (const auto* ex : events_of<ToolExchange>(t)) {
        CHECK(ex->outcome.phase == CallPhase::Late);
        CHECK(ex->time > 9.0);
    }
    CHECK(env.consumed() == std::set<int>{1, 2});
    // <think> + 3 + 3 + 3 generated, then two words of O.
    CHECK(t.post_turn_tokens == 10 + 2);
}

TEST_CASE("call-after-listen without calls")
{
    auto s = scenario({2, 5});
    ToolEnvironment env;
    ScriptedBackend b(script({"</think>", "just this"}));
    const auto t = run_call_after_listen(s, b, env, no_preamble());
    CHECK(events_of<ToolExchange>(t).empty());
    CHECK(t.response()->tokens == Tokens{"just", "this"});
}

TEST_CASE("iteration cap")
{
    auto s = scenario({2.0});
    ToolEnvironment env;
    Script sc;
    for (int i = 1; i <= 40; ++i) sc.push_back({i, tokenize(R"(<tool_call> {"name":"X","arguments":{}} </tool_call>)")});
    ScriptedBackend b(sc);
    const auto t = run_call_after_listen(s, b, env, no_preamble());
    CHECK(t.status == TraceStatus::IterationCapExceeded);
    CHECK(b.steps_served() == 16);

    // Exactly at the cap still completes.
    Script ok;
    for (int i = 1; i <= 15; ++i) ok.push_back({i, tokenize(R"(<tool_call> {"name":"X","arguments":{}} </tool_call>)")});
    ok.push_back({16, {"</think>"}});
    ok.push_back({17, {"fine"}});
    ScriptedBackend b2(ok);
    ToolEnvironment env2;
    CHECK(run_call_after_listen(s, b2, env2, no_preamble()).status == TraceStatus::Completed);
}

TEST_CASE("combined keeps successful early calls only")
{
    auto s = scenario({2, 5, 9});
    s.ground_truth_calls = {gt(1, "A", {}, "ra"), gt(2, "B", {{"x", 1}}, "rb")};
    auto env = make_environment(s);
    RecordingBackend b(script({
        R"(<tool_call> {"name":"A","arguments":{}} </tool_call>)", "</think>",        // R_1
        R"(<tool_call> {"name":"B","arguments":{"x":2}} </tool_call>)", "</think>",   // R_2 fails
        R"(<tool_call> {"name":"B","arguments":{"x":1}} </tool_call>)", "</think>",   // phase 2
        "answer ra rb",
    }));
    const auto t = run_combined(s, b, env, no_preamble());
    CHECK(t.status == TraceStatus::Completed);
    CHECK(kinds(t) == "STRSTR|STRO");
    const auto ex = events_of<ToolExchange>(t);
    CHECK(ex[0]->outcome.matched == 1);
    CHECK(ex[0]->outcome.phase == CallPhase::Early);
    CHECK(ex[1]->outcome.is_error);
    CHECK(ex[2]->outcome.matched == 2);
    CHECK(ex[2]->outcome.phase == CallPhase::Late);

    const auto final_r = events_of<ThinkingGenerated>(t).back()->chunk;
    CHECK(final_r.carried_tokens == 3);
    CHECK(final_r.after_end_of_audio);
    // Phase 2 sees the whole query and the surviving call, not the failed one.
    const auto& ctx = b.requests[4].context;
    const Tokens expect_start{"w1", "w2", "w3", "[EOA]", "<think>", "<tool_call>"};
    CHECK(Tokens(ctx.begin(), ctx.begin() + 6) == expect_start);
    CHECK(contains(ctx, "ra"));
    CHECK_FALSE(contains(ctx, kGenericToolError.substr(0, 6)));
    // <think> + 3 + 1 generated in phase 2, then 3 response words.
    CHECK(t.post_turn_tokens == 5 + 3);
}

TEST_CASE("combined without early calls matches call-after-listen")
{
    auto s = scenario({2, 5, 9});
    s.ground_truth_calls = {gt(1, "A", {}, "ra")};
    const char* call = R"(<tool_call> {"name":"A","arguments":{}} </tool_call>)";
    auto env1 = make_environment(s);
    RecordingBackend comb(script({"hmm </think>", "hmm </think>", call, "</think>", "ra it is"}));
    const auto tc = run_combined(s, comb, env1, no_preamble());
    auto env2 = make_environment(s);
    RecordingBackend cal(script({call, "</think>", "ra it is"}));
    const auto ta = run_call_after_listen(s, cal, env2, no_preamble());
    CHECK(tc.post_turn_tokens == ta.post_turn_tokens);
    CHECK(tc.response()->tokens == ta.response()->tokens);
    const auto rc = events_of<ThinkingGenerated>(tc).back()->chunk;
    const auto ra = events_of<ThinkingGenerated>(ta).back()->chunk;
    CHECK(rc.tokens == ra.tokens);
    for (std::size_t i = 0; i < 3; ++i) CHECK(comb.requests[i + 2].context == cal.requests[i].context);
}

TEST_CASE("combined with every call early needs only the response")
{
    auto s = scenario({2, 5, 9});
    s.ground_truth_calls = {gt(1, "A", {}, "ra"), gt(2, "B", {}, "rb")};
    auto env = make_environment(s);
    ScriptedBackend b(script({R"(<tool_call> {"name":"A","arguments":{}} </tool_call>)", "</think>",
                              R"(<tool_call> {"name":"B","arguments":{}} </tool_call>)", "</think>", "</think>",
                              "ra and rb"}));
    const auto t = run_combined(s, b, env, no_preamble());
    CHECK(env.consumed() == std::set<int>{1, 2});
    const auto last = events_of<ThinkingGenerated>(t).back()->chunk;
    CHECK(last.generated_tokens() == 2);
    CHECK(t.post_turn_tokens == 2 + 3);
}

TEST_CASE("aborts are recorded in the trace")
{
    auto s = scenario({2, 5});
    ToolEnvironment env;
    FailingBackend fb;
    const auto t = run_shanks(s, fb, env, no_preamble());
    CHECK(t.status == TraceStatus::TransportError);
    CHECK(t.error.find("connection refused") != std::string::npos);

    SessionConfig tiny = no_preamble();
    tiny.chunking.max_context = 4;
    ScriptedBackend b(script({"a b c d e f </think>", "x"}));
    ToolEnvironment env2;
    const auto o = run_shanks(s, b, env2, tiny);
    CHECK(o.status == TraceStatus::ContextOverflow);
}

TEST_CASE("zero token rate cannot be simulated")
{
    auto s = scenario({2.0});
    SessionConfig c;
    c.chunking.n_tps = 0;
    ScriptedBackend b({});
    ToolEnvironment env;
    CHECK_THROWS_AS(run_shanks(s, b, env, c), ValidationError);
}

TEST_CASE("preamble leads every context")
{
    auto s = scenario({2.0});
    s.system_preamble = "You are helpful";
    s.tools = {ToolSpec{"Lookup", "find things", {{"q", {"string", true, "query"}}}}};
    RecordingBackend b(script({"</think>", "ok"}));
    ToolEnvironment env;
    run_shanks(s, b, env, SessionConfig{});
    const auto pre = build_preamble(s);
    CHECK(pre.front() == "You");
    for (const auto& r : b.requests) CHECK(Tokens(r.context.begin(), r.context.begin() + pre.size()) == pre);
}

TEST_CASE("simulation is deterministic")
{
    auto s = scenario({1, 3, 4.5, 8, 13});
    s.ground_truth_calls = {gt(1, "A", {}, "ra")};
    const auto sc = script({"x </think>", R"(<tool_call> {"name":"A","arguments":{}} </tool_call>)", "y </think>",
                            "z </think>", "w </think>", "v </think>", "ans"});
    for (auto mode : {Mode::Shanks, Mode::CallAfterListen, Mode::Combined}) {
        ScriptedBackend b1(sc), b2(sc);
        auto e1 = make_environment(s), e2 = make_environment(s);
        CHECK(run(mode, s, b1, e1, SessionConfig{}) == run(mode, s, b2, e2, SessionConfig{}));
    }
}
