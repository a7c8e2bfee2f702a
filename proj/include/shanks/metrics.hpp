#pragma once

#include "shanks/orchestrator.hpp"
#include "shanks/scenario.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shanks {

/// t_interrupt − t_error; absent unless the trace interrupted and the label has an error time.
std::optional<double> interruption_latency(const TurnTrace& trace, const InterruptLabel& label);

/// Words the user had spoken when the model cut in: delivered chunks plus the
/// chunk being spoken during the interrupting thought.
Tokens user_prefix(const TurnTrace& trace);

/// (user prefix, interruption response) -> is the interruption justified?
using InterruptJudge = std::function<bool(const Tokens& user_prefix, const Tokens& response)>;

/// Accepts a response that refers back to something the user said
/// (shares a non-marker token with the prefix).
bool default_interrupt_judge(const Tokens& user_prefix, const Tokens& response);

struct HistogramBucket {
    double lower = 0.0; // bucket covers [lower, lower + width)
    int count = 0;

    friend bool operator==(const HistogramBucket&, const HistogramBucket&) = default;
};

inline constexpr double kLatencyBucketSeconds = 2.0;

struct InterruptSubsetReport {
    int total = 0;
    int interrupted = 0;
    std::optional<double> interrupt_ratio;
    int valid_interruptions = 0;
    std::optional<double> valid_interrupt_ratio;
    std::optional<double> mean_latency; // wrong subset only
    std::vector<HistogramBucket> latency_histogram;

    friend bool operator==(const InterruptSubsetReport&, const InterruptSubsetReport&) = default;
};

struct InterruptReport {
    InterruptSubsetReport correct;
    InterruptSubsetReport wrong;

    friend bool operator==(const InterruptReport&, const InterruptReport&) = default;
};

/// Labels are matched to traces by scenario id.
InterruptReport interrupt_report(std::span<const TurnTrace> traces, std::span<const InterruptLabel> labels,
                                 const InterruptJudge& judge = default_interrupt_judge);

struct QualityScores {
    int correctness = 0;  // 0..2
    int completeness = 0; // 0..2
};

using QualityJudge = std::function<QualityScores(const Scenario&, const TurnTrace&)>;

/// 2 if every designated answer key appears in the final response, 1 if some do, else 0.
QualityScores default_quality_judge(const Scenario& scenario, const TurnTrace& trace);

struct ToolReport {
    int scenarios = 0;
    int total_gt = 0;
    int early_hits = 0;
    int late_hits = 0;
    int successes = 0;
    std::optional<double> early_accuracy;
    std::optional<double> late_accuracy;
    std::optional<double> total_accuracy;
    std::optional<double> success_rate;
    std::optional<double> mean_post_turn_tokens;
    std::optional<double> correctness;
    std::optional<double> completeness;

    friend bool operator==(const ToolReport&, const ToolReport&) = default;
};

/// Ids a trace consumed, split by the phase of the consuming exchange.
struct CallHits {
    std::set<int> early;
    std::set<int> late;
};

CallHits call_hits(const TurnTrace& trace);

ToolReport tool_report(std::span<const TurnTrace> traces, std::span<const Scenario> scenarios,
                       const QualityJudge& judge = default_quality_judge);

struct Report {
    std::optional<InterruptReport> interrupt;
    std::optional<ToolReport> tool;

    friend bool operator==(const Report&, const Report&) = default;
};

std::string serialize_report(const Report& report);
Report parse_report(std::string_view text, const std::string& source = "<report>");

/// Fixed-width text table, one row per report.
std::string render_table(const Report& report, const std::string& row_label = "model");

} // namespace shanks
