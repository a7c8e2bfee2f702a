#pragma once

#include "shanks/timeline.hpp"
#include "shanks/tokens.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shanks {

/// Thinking text used when a chunk has no tool call to make.
inline constexpr std::string_view kNoCallTemplate = "No additional tool calls can be made at this point.";

enum class BlockKind { Speech, Thinking, ToolResponse, FinalResponse, Marker };
enum class SequenceShape { Plain, Interrupt, ToolCall };

std::string to_string(BlockKind k);
std::string to_string(SequenceShape s);
SequenceShape shape_from_string(const std::string& s);

struct TrainBlock {
    BlockKind kind = BlockKind::Speech;
    Tokens tokens;
    bool loss_mask = false;

    friend bool operator==(const TrainBlock&, const TrainBlock&) = default;
};

struct TrainSequence {
    std::string id;
    SequenceShape shape = SequenceShape::Plain;
    std::vector<TrainBlock> blocks;

    friend bool operator==(const TrainSequence&, const TrainSequence&) = default;
};

/// Mask a block must carry: model emissions are trained on, inputs are not.
bool expected_mask(const TrainBlock& block);

/// S_1,[EOPA],R_1,…,S_N,[EOA],R_N,O. Thinking content is wrapped in think
/// markers unless already wrapped.
TrainSequence assemble_plain(std::span<const SpeechChunk> chunks, std::span<const Tokens> thinkings,
                             const Tokens& response);

/// S_1,[EOPA],R_1,…,S_k,[EOPA],R_k,O where only R_k holds [INTERRUPT].
TrainSequence assemble_interrupt(std::span<const SpeechChunk> chunks, std::span<const Tokens> thinkings,
                                 const Tokens& response);

/// A tool response inserted into thinking chunk `chunk` (1-based) after
/// `position` content tokens (think markers not counted).
struct Placement {
    int chunk = 1;
    std::size_t position = 0;
    Tokens payload;

    friend bool operator==(const Placement&, const Placement&) = default;
};

/// Plain shape whose thinking chunks are split around tool responses.
/// Empty thinking without placements receives the no-call template.
TrainSequence assemble_toolcall(std::span<const SpeechChunk> chunks, std::span<const Tokens> thinkings,
                                std::span<const Placement> placements, const Tokens& response);

/// Structural and mask diagnostics; empty means valid.
std::vector<std::string> validate_sequence(const TrainSequence& sequence);

std::string serialize_sequence(const TrainSequence& sequence); // one line, no newline
TrainSequence parse_sequence(std::string_view line);

std::string serialize_corpus(std::span<const TrainSequence> corpus);
std::vector<TrainSequence> parse_corpus(std::string_view text, const std::string& source = "<corpus>");

struct CorpusDiagnostic {
    std::size_t line = 0;
    std::string id;
    std::string message;
};

/// Every problem in a corpus file, tagged with its line number.
std::vector<CorpusDiagnostic> validate_corpus(std::string_view text);

/// Assembly input record: words are segmented with the given config.
struct TrainTuple {
    std::string id;
    SequenceShape shape = SequenceShape::Plain;
    std::vector<WordTiming> words;
    std::vector<Tokens> thinkings;
    Tokens response;
    std::vector<Placement> placements;
};

std::vector<TrainTuple> parse_tuples(std::string_view text, const std::string& source = "<tuples>");
std::string serialize_tuples(std::span<const TrainTuple> tuples);

/// Interrupt tuples keep the first |thinkings| chunks.
TrainSequence assemble_tuple(const TrainTuple& tuple, const ChunkingConfig& config);

} // namespace shanks
