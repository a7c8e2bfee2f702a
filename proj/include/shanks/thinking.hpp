#pragma once

#include "shanks/tokens.hpp"

#include <cstddef>
#include <vector>

namespace shanks {

/// Tokens inserted into a thinking chunk by the environment rather than the model.
struct Splice {
    std::size_t offset = 0; // index of the first inserted token
    std::size_t length = 0;

    friend bool operator==(const Splice&, const Splice&) = default;
};

/// One unspoken reasoning block, always closed by the think-close marker.
struct ThinkingChunk {
    int index = 1;
    Tokens tokens;
    bool truncated = false;
    bool contains_interrupt = false;
    std::size_t injected_tool_tokens = 0;
    std::vector<Splice> splices;
    // Tool-call tokens replayed from an earlier phase; present in the context but not generated here.
    std::size_t carried_tokens = 0;
    bool after_end_of_audio = false;
    double start_time = 0.0;
    double end_time = 0.0;

    /// Tokens the model emitted for this block (markers included).
    std::size_t generated_tokens() const { return tokens.size() - injected_tool_tokens - carried_tokens; }

    friend bool operator==(const ThinkingChunk&, const ThinkingChunk&) = default;
};

} // namespace shanks
