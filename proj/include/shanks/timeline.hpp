#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shanks {

/// One transcript word with its alignment, in seconds from turn start.
struct WordTiming {
    std::string text;
    double start = 0.0;
    double end = 0.0;

    friend bool operator==(const WordTiming&, const WordTiming&) = default;
};

struct ChunkingConfig {
    double t_chunk = 4.0;       // seconds of speech per chunk
    double n_tps = 80.0;        // model tokens per second
    std::int64_t max_context = 32768;
    std::optional<std::int64_t> final_budget; // budget after end-of-audio; none = unbounded

    friend bool operator==(const ChunkingConfig&, const ChunkingConfig&) = default;
};

/// One fixed-duration slice of the user's turn. `index` is 1-based.
struct SpeechChunk {
    int index = 1;
    double span_start = 0.0;
    double span_end = 0.0;
    std::vector<WordTiming> words;
    bool is_final = false;

    friend bool operator==(const SpeechChunk&, const SpeechChunk&) = default;
};

/// Throws ValidationError on a non-positive chunk length, negative rate or empty context window.
void validate(const ChunkingConfig& config);

/// Throws ValidationError for words with end <= start, negative starts, unsorted or overlapping words.
void validate_words(std::span<const WordTiming> words);

/// 1-based chunk index whose half-open-left interval ((i-1)·t, i·t] contains `time`.
/// Times at or below zero map to chunk 1.
int chunk_index_for(double time, double t_chunk);

/// Splits a transcript into chunks by word end time. A word ending exactly on a
/// boundary belongs to the earlier chunk. Empty input gives an empty list.
std::vector<SpeechChunk> segment_transcript(std::span<const WordTiming> words, const ChunkingConfig& config);

/// floor(t_chunk × n_tps).
std::int64_t thinking_budget(const ChunkingConfig& config);

} // namespace shanks
