#pragma once

#include "shanks/timeline.hpp"
#include "shanks/tool_runtime.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace shanks {

enum class Subset { Correct, Wrong };

/// Ground truth for an interruption test item. Wrong items carry the time of the
/// user's first mistake.
struct InterruptLabel {
    std::string scenario_id;
    Subset subset = Subset::Correct;
    std::optional<double> t_error;

    friend bool operator==(const InterruptLabel&, const InterruptLabel&) = default;
};

enum class Task { Interrupt, ToolCall };

struct Scenario {
    std::string id;
    Task task = Task::Interrupt;
    std::vector<WordTiming> words;
    std::vector<ToolSpec> tools;
    std::vector<GroundTruthCall> ground_truth_calls;
    std::optional<InterruptLabel> label;
    std::optional<std::string> system_preamble;
    std::map<int, ValueSpans> annotations; // call id -> argument value spans

    double duration() const { return words.empty() ? 0.0 : words.back().end; }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Checks every scenario invariant; throws ValidationError naming the field.
void validate(const Scenario& scenario);

std::string to_string(Task t);
std::string to_string(Subset s);
Task task_from_string(const std::string& s);

} // namespace shanks
