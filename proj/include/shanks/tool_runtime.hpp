#pragma once

#include "shanks/thinking.hpp"
#include "shanks/timeline.hpp"
#include "shanks/tokens.hpp"

#include <json.hpp>

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace shanks {

struct ParameterSpec {
    std::string type; // "string", "number", "integer", "boolean", ...
    bool required = false;
    std::string description;

    friend bool operator==(const ParameterSpec&, const ParameterSpec&) = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::map<std::string, ParameterSpec> parameters;

    friend bool operator==(const ToolSpec&, const ToolSpec&) = default;
};

struct GroundTruthCall {
    int id = 0;
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();
    std::string response;
    std::set<int> depends_on;
    std::optional<double> earliest_time;
    // Value the final answer must mention; used by the default quality judge.
    std::optional<std::string> answer_key;

    friend bool operator==(const GroundTruthCall&, const GroundTruthCall&) = default;
};

/// Half-open token range [begin, end).
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct ToolCall {
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();
    TokenSpan raw_span; // open marker through close marker

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

enum class CallPhase { Early, Late };

struct MatchOutcome {
    std::optional<int> matched;
    std::string response_payload;
    bool is_error = false;
    CallPhase phase = CallPhase::Late;
    bool replay = false; // repeat of an already consumed call

    friend bool operator==(const MatchOutcome&, const MatchOutcome&) = default;
};

inline constexpr std::string_view kGenericToolError = "Error: the tool call could not be completed.";

struct MalformedSpan {
    std::size_t begin = 0;
    std::string reason;
};

struct ParsedCalls {
    std::vector<ToolCall> calls;
    std::vector<MalformedSpan> malformed;
};

/// Extracts every `<tool_call> {"name":…,"arguments":{…}} </tool_call>` span.
ParsedCalls parse_tool_calls(std::span<const Token> thinking_tokens);

/// Renders a call the way the model is expected to write it.
Tokens render_tool_call(const std::string& name, const nlohmann::json& arguments);

/// Canonical form used for structural matching: strings trimmed, numbers as
/// doubles, numeric strings converted for numeric-typed parameters.
nlohmann::json canonicalize_arguments(const nlohmann::json& arguments, const ToolSpec* spec);

class CallMatcher {
public:
    virtual ~CallMatcher() = default;
    virtual bool matches(const ToolCall& call, const GroundTruthCall& truth,
                         std::span<const ToolSpec> specs) const = 0;
};

/// Equal names and equal canonical argument maps.
class StructuralMatcher final : public CallMatcher {
public:
    bool matches(const ToolCall& call, const GroundTruthCall& truth,
                 std::span<const ToolSpec> specs) const override;
};

/// Session-local view over a scenario's ground truth with consumption state.
class ToolEnvironment {
public:
    ToolEnvironment() = default;
    ToolEnvironment(std::vector<ToolSpec> specs, std::vector<GroundTruthCall> ground_truth,
                    std::shared_ptr<const CallMatcher> matcher = nullptr);

    const std::vector<ToolSpec>& specs() const { return specs_; }
    const std::vector<GroundTruthCall>& ground_truth() const { return ground_truth_; }
    const std::set<int>& consumed() const { return consumed_; }
    const GroundTruthCall* find(int id) const;

    /// See match_call().
    MatchOutcome match(const ToolCall& call, double now, double eoa_time);

private:
    std::vector<ToolSpec> specs_;
    std::vector<GroundTruthCall> ground_truth_; // sorted by id
    std::set<int> consumed_;
    std::shared_ptr<const CallMatcher> matcher_;
};

/// Lowest-id unconsumed match is consumed and answered; a repeat of a consumed
/// call is answered from cache; anything else gets the generic error.
/// Phase is Early iff now < eoa_time.
MatchOutcome match_call(const ToolCall& call, ToolEnvironment& env, double now, double eoa_time);

/// Inclusive word-index range supporting one argument value.
struct WordSpan {
    std::size_t first = 0;
    std::size_t last = 0;

    friend bool operator==(const WordSpan&, const WordSpan&) = default;
};

/// Argument whose value comes from another call's output.
struct FromDependency {
    friend bool operator==(const FromDependency&, const FromDependency&) = default;
};

using ArgumentSource = std::variant<WordSpan, FromDependency>;
using ValueSpans = std::map<std::string, ArgumentSource>;

/// Earliest moment a call is fully specified: the latest end time of any word
/// backing a literal argument, or a dependency's earliest time, whichever is later.
double earliest_call_time(const GroundTruthCall& truth, std::span<const WordTiming> words,
                          const ValueSpans& value_spans, const ToolEnvironment& env);

/// Ids ordered so every call follows its dependencies (ties by id). Throws on cycles.
std::vector<int> topological_order(std::span<const GroundTruthCall> calls);

/// Fills earliest_time for every call in dependency order.
std::vector<GroundTruthCall> assign_earliest_times(std::vector<GroundTruthCall> calls,
                                                   std::span<const WordTiming> words,
                                                   const std::map<int, ValueSpans>& annotations);

struct ChunkAssignment {
    std::map<int, std::vector<int>> calls_by_chunk; // chunk index -> call ids in dependency order
    std::vector<int> empty_chunks;                  // chunks needing the no-call template
};

/// Call with earliest time e goes to thinking chunk ceil(e / t_chunk) (at least 1).
/// `num_chunks` of 0 means "up to the last assigned chunk".
ChunkAssignment assign_to_chunks(std::span<const GroundTruthCall> calls, const ChunkingConfig& config,
                                 int num_chunks = 0);

/// Splices the outcome payload right after the call span.
ThinkingChunk inject_tool_response(const ThinkingChunk& thinking, const ToolCall& call,
                                   const MatchOutcome& outcome);

} // namespace shanks
