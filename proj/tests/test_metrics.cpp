#include "shanks/errors.hpp"
#include "shanks/metrics.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace shanks;

namespace {

TurnTrace interrupted(std::string id, double t_interrupt, Tokens response = {"you", "said", "w1"})
{
    TurnTrace t;
    t.scenario_id = std::move(id);
    SpeechChunk c;
    c.words = {{"w1", 0, 1}};
    t.events.push_back(ChunkDelivered{4.0, c});
    t.events.push_back(ResponseEmitted{{std::move(response), t_interrupt}});
    t.interrupted_at = 1;
    t.t_interrupt = t_interrupt;
    return t;
}

TurnTrace quiet(std::string id)
{
    TurnTrace t;
    t.scenario_id = std::move(id);
    t.events.push_back(ResponseEmitted{{{"fine"}, 5.0}});
    return t;
}

InterruptLabel wrong(std::string id, double t_error) { return {std::move(id), Subset::Wrong, t_error}; }
InterruptLabel correct(std::string id) { return {std::move(id), Subset::Correct, std::nullopt}; }

ToolExchange exchange(int id, CallPhase phase, bool replay = false)
{
    ToolExchange x;
    x.outcome.matched = id;
    x.outcome.phase = phase;
    x.outcome.replay = replay;
    return x;
}

Scenario tool_scenario(std::string id, int n_calls)
{
    Scenario s;
    s.id = std::move(id);
    s.task = Task::ToolCall;
    for (int i = 1; i <= n_calls; ++i) {
        GroundTruthCall c;
        c.id = i;
        c.name = "T";
        c.response = "r" + std::to_string(i);
        c.answer_key = "r" + std::to_string(i);
        s.ground_truth_calls.push_back(c);
    }
    return s;
}

} // namespace

TEST_CASE("interruption latency")
{
    CHECK(*interruption_latency(interrupted("a", 10.0), wrong("a", 8.0)) == 2.0);
    CHECK(*interruption_latency(interrupted("a", 7.0), wrong("a", 8.0)) == -1.0);
    CHECK_FALSE(interruption_latency(quiet("a"), wrong("a", 8.0)));
    CHECK_FALSE(interruption_latency(interrupted("a", 7.0), correct("a")));
}

TEST_CASE("interrupt ratios")
{
    const std::vector<TurnTrace> traces{interrupted("a", 9.0), interrupted("b", 9.0, {"nope"}), quiet("c"), quiet("d")};
    const std::vector<InterruptLabel> labels{wrong("a", 8.0), wrong("b", 8.5), wrong("c", 1.0), wrong("d", 2.0)};
    const auto r = interrupt_report(traces, labels);
    CHECK(r.wrong.total == 4);
    CHECK(r.wrong.interrupted == 2);
    CHECK(*r.wrong.interrupt_ratio == 0.5);
    CHECK(r.wrong.valid_interruptions == 1);
    CHECK(*r.wrong.valid_interrupt_ratio == 0.5);
    CHECK(*r.wrong.mean_latency == doctest::Approx(0.75));
    CHECK(r.wrong.latency_histogram == std::vector<HistogramBucket>{{0.0, 2}});
    CHECK(r.correct.total == 0);
    CHECK_FALSE(r.correct.interrupt_ratio);
}

TEST_CASE("no interruptions leave ratios absent")
{
    const std::vector<TurnTrace> traces{quiet("a"), quiet("b")};
    const std::vector<InterruptLabel> labels{correct("a"), wrong("b", 3.0)};
    const auto r = interrupt_report(traces, labels);
    CHECK(*r.correct.interrupt_ratio == 0.0);
    CHECK_FALSE(r.correct.valid_interrupt_ratio);
    CHECK_FALSE(r.wrong.valid_interrupt_ratio);
    CHECK_FALSE(r.wrong.mean_latency);
    CHECK(r.wrong.latency_histogram.empty());
}

TEST_CASE("interrupt report input errors name the scenario")
{
    const std::vector<TurnTrace> dup{quiet("a"), quiet("a")};
    const std::vector<InterruptLabel> labels{correct("a")};
    CHECK_THROWS_AS(interrupt_report(dup, labels), ValidationError);
    const std::vector<TurnTrace> unlabeled{quiet("zz")};
    try {
        interrupt_report(unlabeled, labels);
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("zz") != std::string::npos);
    }
}

TEST_CASE("the judge sees the overlap chunk")
{
    auto t = interrupted("a", 9.0, {"about", "w2"});
    SpeechChunk overlap;
    overlap.words = {{"w2", 4, 5}};
    t.undelivered_overlap = overlap;
    CHECK(user_prefix(t) == Tokens{"w1", "w2"});
    const std::vector<TurnTrace> traces{t};
    const std::vector<InterruptLabel> labels{wrong("a", 4.5)};
    CHECK(interrupt_report(traces, labels).wrong.valid_interruptions == 1);
    Tokens seen;
    interrupt_report(traces, labels, [&](const Tokens& prefix, const Tokens&) {
        seen = prefix;
        return false;
    });
    CHECK(seen == Tokens{"w1", "w2"});
}

TEST_CASE("latency histogram uses two second buckets")
{
    std::vector<TurnTrace> traces;
    std::vector<InterruptLabel> labels;
    const std::vector<double> lat{-1.0, 0.0, 1.99, 2.0, 5.5, 5.9};
    for (std::size_t i = 0; i < lat.size(); ++i) {
        const auto id = "s" + std::to_string(i);
        traces.push_back(interrupted(id, 10.0));
        labels.push_back(wrong(id, 10.0 - lat[i]));
    }
    const auto r = interrupt_report(traces, labels);
    CHECK(r.wrong.latency_histogram ==
          std::vector<HistogramBucket>{{-2.0, 1}, {0.0, 2}, {2.0, 1}, {4.0, 2}});
}

TEST_CASE("tool accounting with three early and one late")
{
    const auto s = tool_scenario("x", 4);
    TurnTrace t;
    t.scenario_id = "x";
    t.events = {exchange(1, CallPhase::Early), exchange(2, CallPhase::Early), exchange(2, CallPhase::Early, true),
                exchange(3, CallPhase::Early), exchange(4, CallPhase::Late)};
    t.events.push_back(ResponseEmitted{{{"r1", "r2", "r3", "r4"}, 20.0}});
    t.post_turn_tokens = 9;
    const std::vector<TurnTrace> traces{t};
    const std::vector<Scenario> scenarios{s};
    const auto r = tool_report(traces, scenarios);
    CHECK(*r.early_accuracy == 0.75);
    CHECK(*r.late_accuracy == 0.25);
    CHECK(*r.total_accuracy == 1.0);
    CHECK(*r.success_rate == 1.0);
    CHECK(*r.correctness == 2.0);
    CHECK(*r.mean_post_turn_tokens == 9.0);
}

TEST_CASE("no calls matched")
{
    const std::vector<Scenario> scenarios{tool_scenario("x", 2)};
    TurnTrace t;
    t.scenario_id = "x";
    ToolExchange failed;
    failed.outcome.is_error = true;
    t.events = {failed};
    const std::vector<TurnTrace> traces{t};
    const auto r = tool_report(traces, scenarios);
    CHECK(*r.early_accuracy == 0.0);
    CHECK(*r.late_accuracy == 0.0);
    CHECK(*r.total_accuracy == 0.0);
    CHECK(*r.success_rate == 0.0);
    CHECK(*r.correctness == 0.0);
}

TEST_CASE("post-turn tokens average 313 and 117 to 215")
{
    const std::vector<Scenario> scenarios{tool_scenario("cal", 1), tool_scenario("comb", 1)};
    TurnTrace a, b;
    a.scenario_id = "cal";
    a.post_turn_tokens = 313;
    b.scenario_id = "comb";
    b.post_turn_tokens = 117;
    const std::vector<TurnTrace> traces{a, b};
    CHECK(*tool_report(traces, scenarios).mean_post_turn_tokens == 215.0);
    const std::vector<TurnTrace> unknown{TurnTrace{.scenario_id = "nope"}};
    CHECK_THROWS_AS(tool_report(unknown, scenarios), ValidationError);
}

TEST_CASE("quality stub grades answer keys")
{
    const auto s = tool_scenario("x", 2);
    TurnTrace t;
    t.events.push_back(ResponseEmitted{{{"only", "r2"}, 1.0}});
    CHECK(default_quality_judge(s, t).correctness == 1);
    t.events.push_back(ResponseEmitted{{{"nothing"}, 1.0}});
    CHECK(default_quality_judge(s, t).correctness == 0);
    t.events.push_back(ResponseEmitted{{{"r1", "r2"}, 1.0}});
    CHECK(default_quality_judge(s, t).completeness == 2);
}

TEST_CASE("reports are permutation invariant and round trip")
{
    std::mt19937_64 rng(3);
    std::vector<TurnTrace> traces;
    std::vector<InterruptLabel> labels;
    for (int i = 0; i < 30; ++i) {
        const auto id = "s" + std::to_string(i);
        const double te = std::uniform_real_distribution<double>(0, 40)(rng);
        if (rng() % 2) traces.push_back(interrupted(id, te + std::uniform_real_distribution<double>(-2, 9)(rng)));
        else traces.push_back(quiet(id));
        labels.push_back(rng() % 3 ? wrong(id, te) : correct(id));
    }
    const auto base = interrupt_report(traces, labels);
    for (int k = 0; k < 10; ++k) {
        std::shuffle(traces.begin(), traces.end(), rng);
        std::shuffle(labels.begin(), labels.end(), rng);
        CHECK(interrupt_report(traces, labels) == base);
    }
    Report r;
    r.interrupt = base;
    ToolReport tr;
    tr.scenarios = 3;
    tr.total_gt = 7;
    tr.early_hits = 2;
    tr.early_accuracy = 2.0 / 7.0;
    tr.mean_post_turn_tokens = 1.0 / 3.0;
    r.tool = tr;
    CHECK(parse_report(serialize_report(r)) == r);
    const auto table = render_table(r, "shanks");
    CHECK(table.find("shanks") != std::string::npos);
    CHECK(table.find("28.6") != std::string::npos);
}
