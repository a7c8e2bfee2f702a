#pragma once

#include "shanks/backend.hpp"
#include "shanks/scenario.hpp"
#include "shanks/thinking.hpp"
#include "shanks/timeline.hpp"
#include "shanks/tool_runtime.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace shanks {

enum class Mode { Shanks, CallAfterListen, Combined };
enum class TraceStatus { Completed, ContextOverflow, TransportError, IterationCapExceeded };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);
std::string to_string(TraceStatus s);
TraceStatus status_from_string(const std::string& s);

struct SessionConfig {
    ChunkingConfig chunking;
    int iteration_cap = 16;       // generate calls allowed after end of audio
    bool include_preamble = true; // system preamble and tool descriptions lead the context

    friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

struct ResponseChunk {
    Tokens tokens;
    double emit_time = 0.0; // first token

    friend bool operator==(const ResponseChunk&, const ResponseChunk&) = default;
};

struct ChunkDelivered {
    double time = 0.0;
    SpeechChunk chunk;
    friend bool operator==(const ChunkDelivered&, const ChunkDelivered&) = default;
};

struct ThinkingGenerated {
    ThinkingChunk chunk;
    friend bool operator==(const ThinkingGenerated&, const ThinkingGenerated&) = default;
};

/// Recorded before the ThinkingGenerated event of the chunk it happened in.
struct ToolExchange {
    double time = 0.0;
    int thinking_index = 0;
    ToolCall call;
    MatchOutcome outcome;
    bool malformed = false;
    friend bool operator==(const ToolExchange&, const ToolExchange&) = default;
};

struct ResponseEmitted {
    ResponseChunk response;
    friend bool operator==(const ResponseEmitted&, const ResponseEmitted&) = default;
};

/// The context restarts from the preamble (combined mode, second phase).
struct ContextRebuilt {
    double time = 0.0;
    friend bool operator==(const ContextRebuilt&, const ContextRebuilt&) = default;
};

using TraceEvent = std::variant<ChunkDelivered, ThinkingGenerated, ToolExchange, ResponseEmitted, ContextRebuilt>;

struct TurnTrace {
    std::string scenario_id;
    Mode mode = Mode::Shanks;
    SessionConfig config;
    std::vector<TraceEvent> events;
    std::optional<int> interrupted_at;
    std::optional<double> t_interrupt;
    std::optional<SpeechChunk> undelivered_overlap;
    std::optional<double> eoa_time; // when the end-of-audio chunk was delivered
    std::int64_t post_turn_tokens = 0;
    TraceStatus status = TraceStatus::Completed;
    std::string error;

    const ResponseChunk* response() const;

    friend bool operator==(const TurnTrace&, const TurnTrace&) = default;
};

/// System preamble tokens followed by one rendered description per tool.
Tokens build_preamble(const Scenario& scenario);

/// Context seen by the model after `events`: delivered words plus [EOPA]/[EOA],
/// thinking chunks verbatim, in order, after the preamble.
Tokens build_context(std::span<const TraceEvent> events, const Tokens& preamble = {});

/// Think-while-listening: S_i at i·t_chunk, budgeted R_i while S_{i+1} is spoken.
TurnTrace run_shanks(const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
                     const SessionConfig& config);

/// Baseline: whole turn at once, then generate / call / regenerate.
TurnTrace run_call_after_listen(const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
                                const SessionConfig& config);

/// SHANKS while the user speaks, then call-after-listen over the full query
/// with the successful early calls carried over.
TurnTrace run_combined(const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
                       const SessionConfig& config);

TurnTrace run(Mode mode, const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
              const SessionConfig& config);

/// Fresh environment over a scenario's tools and ground truth.
ToolEnvironment make_environment(const Scenario& scenario, std::shared_ptr<const CallMatcher> matcher = nullptr);

} // namespace shanks
