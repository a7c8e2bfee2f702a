#pragma once

// JSON mappings for the record types shared by the file formats. Field order
// is fixed so serialized files are byte-stable.

#include "shanks/backend.hpp"
#include "shanks/orchestrator.hpp"
#include "shanks/scenario.hpp"
#include "shanks/thinking.hpp"
#include "shanks/timeline.hpp"
#include "shanks/tool_runtime.hpp"

#include <json.hpp>

namespace shanks {

using ojson = nlohmann::ordered_json;

void to_json(ojson& j, const WordTiming& w);
void from_json(const ojson& j, WordTiming& w);
void to_json(ojson& j, const ChunkingConfig& c);
void from_json(const ojson& j, ChunkingConfig& c);
void to_json(ojson& j, const SessionConfig& c);
void from_json(const ojson& j, SessionConfig& c);
void to_json(ojson& j, const SpeechChunk& c);
void from_json(const ojson& j, SpeechChunk& c);
void to_json(ojson& j, const ThinkingChunk& c);
void from_json(const ojson& j, ThinkingChunk& c);
void to_json(ojson& j, const ParameterSpec& p);
void from_json(const ojson& j, ParameterSpec& p);
void to_json(ojson& j, const ToolSpec& t);
void from_json(const ojson& j, ToolSpec& t);
void to_json(ojson& j, const GroundTruthCall& c);
void from_json(const ojson& j, GroundTruthCall& c);
void to_json(ojson& j, const ToolCall& c);
void from_json(const ojson& j, ToolCall& c);
void to_json(ojson& j, const MatchOutcome& m);
void from_json(const ojson& j, MatchOutcome& m);
void to_json(ojson& j, const InterruptLabel& l);
void from_json(const ojson& j, InterruptLabel& l);
void to_json(ojson& j, const ValueSpans& v);
void from_json(const ojson& j, ValueSpans& v);
void to_json(ojson& j, const ResponseChunk& r);
void from_json(const ojson& j, ResponseChunk& r);

/// One trace event as a JSON line record.
ojson event_to_json(const TraceEvent& e);
TraceEvent event_from_json(const ojson& j);

/// Reads an optional double; JSON null means absent.
std::optional<double> optional_number(const ojson& j, const char* key);

} // namespace shanks
