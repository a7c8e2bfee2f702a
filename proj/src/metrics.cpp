#include "shanks/metrics.hpp"

#include "shanks/errors.hpp"
#include "shanks/json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace shanks {

std::optional<double> interruption_latency(const TurnTrace& trace, const InterruptLabel& label)
{
    if (!trace.interrupted_at || !trace.t_interrupt || !label.t_error) return std::nullopt;
    return *trace.t_interrupt - *label.t_error;
}

Tokens user_prefix(const TurnTrace& trace)
{
    Tokens out;
    for (const auto& e : trace.events) {
        if (std::holds_alternative<ContextRebuilt>(e)) out.clear();
        if (const auto* d = std::get_if<ChunkDelivered>(&e))
            for (const auto& w : d->chunk.words) out.push_back(w.text);
    }
    if (trace.undelivered_overlap)
        for (const auto& w : trace.undelivered_overlap->words) out.push_back(w.text);
    return out;
}

bool default_interrupt_judge(const Tokens& prefix, const Tokens& response)
{
    for (const auto& t : response)
        if (!is_marker(t) && contains(prefix, t)) return true;
    return false;
}

namespace {

template <typename T>
std::vector<const T*> sorted_by_id(std::span<const T> items, const std::string& (*id)(const T&))
{
    std::vector<const T*> out;
    for (const auto& x : items) out.push_back(&x);
    std::sort(out.begin(), out.end(), [&](const T* a, const T* b) { return id(*a) < id(*b); });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (id(*out[i]) == id(*out[i - 1])) throw ValidationError("duplicate scenario id '" + id(*out[i]) + "'");
    return out;
}

const std::string& trace_id(const TurnTrace& t) { return t.scenario_id; }
const std::string& scenario_id(const Scenario& s) { return s.id; }

std::optional<double> ratio(int num, int den)
{
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

} // namespace

InterruptReport interrupt_report(std::span<const TurnTrace> traces, std::span<const InterruptLabel> labels,
                                 const InterruptJudge& judge)
{
    std::map<std::string, const InterruptLabel*> by_id;
    for (const auto& l : labels)
        if (!by_id.emplace(l.scenario_id, &l).second)
            throw ValidationError("duplicate label for scenario '" + l.scenario_id + "'");

    InterruptReport report;
    std::map<Subset, double> latency_sum;
    std::map<Subset, int> latency_n;
    std::map<Subset, std::map<long long, int>> buckets;
    // Sorted order keeps floating sums independent of input order.
    for (const auto* trace : sorted_by_id(traces, &trace_id)) {
        auto it = by_id.find(trace->scenario_id);
        if (it == by_id.end()) throw ValidationError("no label for scenario '" + trace->scenario_id + "'");
        const auto& label = *it->second;
        auto& sub = label.subset == Subset::Correct ? report.correct : report.wrong;
        ++sub.total;
        if (!trace->interrupted_at) continue;
        ++sub.interrupted;
        const auto* response = trace->response();
        if (judge(user_prefix(*trace), response ? response->tokens : Tokens{})) ++sub.valid_interruptions;
        if (label.subset != Subset::Wrong) continue;
        if (auto lat = interruption_latency(*trace, label)) {
            latency_sum[label.subset] += *lat;
            ++latency_n[label.subset];
            ++buckets[label.subset][static_cast<long long>(std::floor(*lat / kLatencyBucketSeconds))];
        }
    }
    auto finish = [&](InterruptSubsetReport& sub, Subset subset) {
        sub.interrupt_ratio = ratio(sub.interrupted, sub.total);
        sub.valid_interrupt_ratio = ratio(sub.valid_interruptions, sub.interrupted);
        if (latency_n[subset] > 0) sub.mean_latency = latency_sum[subset] / latency_n[subset];
        for (const auto& [b, n] : buckets[subset])
            sub.latency_histogram.push_back({static_cast<double>(b) * kLatencyBucketSeconds, n});
    };
    finish(report.correct, Subset::Correct);
    finish(report.wrong, Subset::Wrong);
    return report;
}

QualityScores default_quality_judge(const Scenario& scenario, const TurnTrace& trace)
{
    const auto* response = trace.response();
    const std::string text = response ? detokenize(response->tokens) : std::string();
    int keys = 0, found = 0;
    for (const auto& c : scenario.ground_truth_calls) {
        if (!c.answer_key) continue;
        ++keys;
        if (!response) continue;
        if (text.find(*c.answer_key) != std::string::npos) ++found;
    }
    int score = 0;
    if (found == keys && (response || keys == 0)) score = 2;
    else if (found > 0) score = 1;
    return {score, score};
}

CallHits call_hits(const TurnTrace& trace)
{
    CallHits hits;
    for (const auto& e : trace.events) {
        const auto* x = std::get_if<ToolExchange>(&e);
        if (!x || x->malformed || !x->outcome.matched || x->outcome.replay) continue;
        const int id = *x->outcome.matched;
        if (hits.early.contains(id) || hits.late.contains(id)) continue;
        (x->outcome.phase == CallPhase::Early ? hits.early : hits.late).insert(id);
    }
    return hits;
}

ToolReport tool_report(std::span<const TurnTrace> traces, std::span<const Scenario> scenarios,
                       const QualityJudge& judge)
{
    std::map<std::string, const Scenario*> by_id;
    for (const auto* s : sorted_by_id(scenarios, &scenario_id)) by_id.emplace(s->id, s);

    ToolReport r;
    std::int64_t post_sum = 0;
    long long correctness = 0, completeness = 0;
    for (const auto* trace : sorted_by_id(traces, &trace_id)) {
        auto it = by_id.find(trace->scenario_id);
        if (it == by_id.end()) throw ValidationError("trace refers to unknown scenario '" + trace->scenario_id + "'");
        const auto& scenario = *it->second;
        ++r.scenarios;
        r.total_gt += static_cast<int>(scenario.ground_truth_calls.size());

        const auto hits = call_hits(*trace);
        std::set<int> known;
        for (const auto& c : scenario.ground_truth_calls) known.insert(c.id);
        int matched = 0;
        for (int id : hits.early) {
            if (!known.contains(id)) continue;
            ++r.early_hits;
            ++matched;
        }
        for (int id : hits.late) {
            if (!known.contains(id)) continue;
            ++r.late_hits;
            ++matched;
        }
        if (matched == static_cast<int>(known.size())) ++r.successes;
        post_sum += trace->post_turn_tokens;
        const auto q = judge(scenario, *trace);
        correctness += q.correctness;
        completeness += q.completeness;
    }
    r.early_accuracy = ratio(r.early_hits, r.total_gt);
    r.late_accuracy = ratio(r.late_hits, r.total_gt);
    // Defined as the sum so the early/late split always adds up exactly.
    if (r.early_accuracy) r.total_accuracy = *r.early_accuracy + *r.late_accuracy;
    r.success_rate = ratio(r.successes, r.scenarios);
    if (r.scenarios > 0) {
        r.mean_post_turn_tokens = static_cast<double>(post_sum) / r.scenarios;
        r.correctness = static_cast<double>(correctness) / r.scenarios;
        r.completeness = static_cast<double>(completeness) / r.scenarios;
    }
    return r;
}

namespace {

template <typename T>
ojson opt(const std::optional<T>& v)
{
    return v ? ojson(*v) : ojson(nullptr);
}

ojson subset_json(const InterruptSubsetReport& s)
{
    ojson hist = ojson::array();
    for (const auto& b : s.latency_histogram) hist.push_back(ojson{{"lower", b.lower}, {"count", b.count}});
    return ojson{{"total", s.total},
                 {"interrupted", s.interrupted},
                 {"interrupt_ratio", opt(s.interrupt_ratio)},
                 {"valid_interruptions", s.valid_interruptions},
                 {"valid_interrupt_ratio", opt(s.valid_interrupt_ratio)},
                 {"mean_latency", opt(s.mean_latency)},
                 {"latency_histogram", std::move(hist)}};
}

InterruptSubsetReport subset_from_json(const ojson& j)
{
    InterruptSubsetReport s;
    s.total = j.at("total").get<int>();
    s.interrupted = j.at("interrupted").get<int>();
    s.interrupt_ratio = optional_number(j, "interrupt_ratio");
    s.valid_interruptions = j.at("valid_interruptions").get<int>();
    s.valid_interrupt_ratio = optional_number(j, "valid_interrupt_ratio");
    s.mean_latency = optional_number(j, "mean_latency");
    for (const auto& b : j.at("latency_histogram")) s.latency_histogram.push_back({b.at("lower").get<double>(), b.at("count").get<int>()});
    return s;
}

} // namespace

std::string serialize_report(const Report& report)
{
    ojson j{{"kind", "report"}, {"version", 1}};
    if (report.interrupt)
        j["interrupt"] = ojson{{"correct", subset_json(report.interrupt->correct)},
                               {"wrong", subset_json(report.interrupt->wrong)}};
    if (report.tool) {
        const auto& t = *report.tool;
        j["tool"] = ojson{{"scenarios", t.scenarios},
                          {"total_gt", t.total_gt},
                          {"early_hits", t.early_hits},
                          {"late_hits", t.late_hits},
                          {"successes", t.successes},
                          {"early_accuracy", opt(t.early_accuracy)},
                          {"late_accuracy", opt(t.late_accuracy)},
                          {"total_accuracy", opt(t.total_accuracy)},
                          {"success_rate", opt(t.success_rate)},
                          {"mean_post_turn_tokens", opt(t.mean_post_turn_tokens)},
                          {"correctness", opt(t.correctness)},
                          {"completeness", opt(t.completeness)}};
    }
    return j.dump(2) + "\n";
}

Report parse_report(std::string_view text, const std::string& source)
{
    try {
        const auto j = ojson::parse(text);
        if (j.value("kind", std::string()) != "report") throw ValidationError("not a report document");
        Report r;
        if (j.contains("interrupt")) {
            InterruptReport ir;
            ir.correct = subset_from_json(j.at("interrupt").at("correct"));
            ir.wrong = subset_from_json(j.at("interrupt").at("wrong"));
            r.interrupt = ir;
        }
        if (j.contains("tool")) {
            const auto& x = j.at("tool");
            ToolReport t;
            t.scenarios = x.at("scenarios").get<int>();
            t.total_gt = x.at("total_gt").get<int>();
            t.early_hits = x.at("early_hits").get<int>();
            t.late_hits = x.at("late_hits").get<int>();
            t.successes = x.at("successes").get<int>();
            t.early_accuracy = optional_number(x, "early_accuracy");
            t.late_accuracy = optional_number(x, "late_accuracy");
            t.total_accuracy = optional_number(x, "total_accuracy");
            t.success_rate = optional_number(x, "success_rate");
            t.mean_post_turn_tokens = optional_number(x, "mean_post_turn_tokens");
            t.correctness = optional_number(x, "correctness");
            t.completeness = optional_number(x, "completeness");
            r.tool = t;
        }
        return r;
    } catch (const std::exception& e) {
        throw ValidationError(source + ": " + e.what());
    }
}

namespace {

std::string cell(const std::optional<double>& v, double scale, int precision)
{
    if (!v) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *v * scale);
    return buf;
}

std::string pad(const std::string& s, std::size_t width)
{
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

} // namespace

std::string render_table(const Report& report, const std::string& row_label)
{
    std::string out;
    const std::size_t w = std::max<std::size_t>(row_label.size(), 8);
    if (report.interrupt) {
        const auto& c = report.interrupt->correct;
        const auto& x = report.interrupt->wrong;
        out += pad("", w) + " | " + pad("Correct", 21) + " | " + pad("Wrong", 37) + "\n";
        out += pad("", w) + " | " + pad("Interrupt", 10) + " " + pad("Valid", 10) + " | " + pad("Interrupt", 10) +
               " " + pad("Valid", 10) + " " + pad("Latency(s)", 15) + "\n";
        out += pad(row_label, w) + " | " + pad(cell(c.interrupt_ratio, 100, 1), 10) + " " +
               pad(cell(c.valid_interrupt_ratio, 100, 1), 10) + " | " + pad(cell(x.interrupt_ratio, 100, 1), 10) + " " +
               pad(cell(x.valid_interrupt_ratio, 100, 1), 10) + " " + pad(cell(x.mean_latency, 1, 2), 15) + "\n";
    }
    if (report.tool) {
        const auto& t = *report.tool;
        if (!out.empty()) out += "\n";
        out += pad("", w) + " | " + pad("Early", 6) + " " + pad("Late", 6) + " " + pad("Total", 6) + " | " +
               pad("Success", 7) + " | " + pad("Correct", 7) + " " + pad("Complete", 8) + " | " + pad("Latency", 7) + "\n";
        out += pad(row_label, w) + " | " + pad(cell(t.early_accuracy, 100, 1), 6) + " " +
               pad(cell(t.late_accuracy, 100, 1), 6) + " " + pad(cell(t.total_accuracy, 100, 1), 6) + " | " +
               pad(cell(t.success_rate, 100, 1), 7) + " | " + pad(cell(t.correctness, 1, 2), 7) + " " +
               pad(cell(t.completeness, 1, 2), 8) + " | " + pad(cell(t.mean_post_turn_tokens, 1, 0), 7) + "\n";
    }
    return out;
}

} // namespace shanks
