#include "shanks/scenario.hpp"

#include "shanks/errors.hpp"

#include <set>

namespace shanks {

std::string to_string(Task t)
{
    return t == Task::Interrupt ? "interrupt" : "tool_call";
}

Task task_from_string(const std::string& s)
{
    if (s == "interrupt") return Task::Interrupt;
    if (s == "tool_call") return Task::ToolCall;
    throw ValidationError("unknown task '" + s + "'");
}

std::string to_string(Subset s)
{
    return s == Subset::Correct ? "correct" : "wrong";
}

void validate(const Scenario& s)
{
    if (s.id.empty()) throw ValidationError("scenario id must not be empty");
    const std::string where = "scenario '" + s.id + "': ";
    if (s.words.empty()) throw ValidationError(where + "words must not be empty");
    try {
        validate_words(s.words);
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    }

    if (s.task == Task::Interrupt) {
        if (!s.label) throw ValidationError(where + "interrupt scenarios need a label");
        if (!s.ground_truth_calls.empty() || !s.tools.empty())
            throw ValidationError(where + "interrupt scenarios must not carry tools or ground_truth_calls");
        if (s.label->scenario_id != s.id) throw ValidationError(where + "label.scenario_id does not match");
        if (s.label->subset == Subset::Wrong && (!s.label->t_error || *s.label->t_error < 0.0))
            throw ValidationError(where + "wrong-subset label needs t_error >= 0");
        if (s.label->subset == Subset::Correct && s.label->t_error)
            throw ValidationError(where + "correct-subset label must not carry t_error");
        return;
    }

    if (s.label) throw ValidationError(where + "tool_call scenarios must not carry an interrupt label");
    if (s.tools.empty()) throw ValidationError(where + "tool_call scenarios need tools");
    if (s.ground_truth_calls.empty()) throw ValidationError(where + "tool_call scenarios need ground_truth_calls");

    std::set<std::string> names;
    for (const auto& t : s.tools)
        if (!names.insert(t.name).second) throw ValidationError(where + "tool '" + t.name + "' is declared twice");

    try {
        topological_order(s.ground_truth_calls); // also rejects unknown dependencies
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    }
    std::set<int> ids;
    for (const auto& c : s.ground_truth_calls) {
        if (!ids.insert(c.id).second)
            throw ValidationError(where + "ground-truth call id " + std::to_string(c.id) + " repeats");
        if (!c.arguments.is_object())
            throw ValidationError(where + "call " + std::to_string(c.id) + " arguments must be an object");
    }
    for (const auto& c : s.ground_truth_calls) {
        if (!c.earliest_time) continue;
        for (int dep : c.depends_on) {
            for (const auto& p : s.ground_truth_calls) {
                if (p.id != dep) continue;
                if (p.earliest_time && *c.earliest_time < *p.earliest_time)
                    throw ValidationError(where + "call " + std::to_string(c.id) +
                                          " is callable before its dependency " + std::to_string(dep));
            }
        }
    }
    for (const auto& [id, spans] : s.annotations) {
        if (!ids.contains(id))
            throw ValidationError(where + "annotation for unknown call " + std::to_string(id));
        for (const auto& [arg, src] : spans)
            if (const auto* w = std::get_if<WordSpan>(&src); w && (w->first > w->last || w->last >= s.words.size()))
                throw ValidationError(where + "annotation span for call " + std::to_string(id) + " argument '" +
                                      arg + "' is out of range");
    }
}

} // namespace shanks
