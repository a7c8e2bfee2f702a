#include "shanks/timeline.hpp"

#include "shanks/errors.hpp"

#include <cmath>
#include <string>

namespace shanks {

void validate(const ChunkingConfig& config)
{
    if (!(config.t_chunk > 0.0) || !std::isfinite(config.t_chunk))
        throw ValidationError("t_chunk must be a positive number of seconds");
    if (!(config.n_tps >= 0.0) || !std::isfinite(config.n_tps))
        throw ValidationError("n_tps must be a non-negative rate");
    if (config.max_context <= 0) throw ValidationError("max_context must be positive");
    if (config.final_budget && *config.final_budget < 0)
        throw ValidationError("final_budget must be non-negative");
}

void validate_words(std::span<const WordTiming> words)
{
    for (std::size_t j = 0; j < words.size(); ++j) {
        const auto& w = words[j];
        if (!std::isfinite(w.start) || !std::isfinite(w.end) || w.start < 0.0)
            throw ValidationError("word " + std::to_string(j) + " has an invalid start time");
        if (!(w.end > w.start))
            throw ValidationError("word " + std::to_string(j) + " ('" + w.text + "') must end after it starts");
        if (j > 0 && w.start < words[j - 1].end)
            throw ValidationError("word " + std::to_string(j) + " ('" + w.text +
                                  "') overlaps or precedes the previous word");
    }
}

int chunk_index_for(double time, double t_chunk)
{
    if (time <= 0.0) return 1;
    auto i = static_cast<long long>(std::ceil(time / t_chunk));
    // Correct floating error at exact boundaries so the rule stays (i-1)·t < time <= i·t.
    while (i > 1 && static_cast<double>(i - 1) * t_chunk >= time) --i;
    while (static_cast<double>(i) * t_chunk < time) ++i;
    return static_cast<int>(std::max<long long>(i, 1));
}

std::vector<SpeechChunk> segment_transcript(std::span<const WordTiming> words, const ChunkingConfig& config)
{
    validate(config);
    validate_words(words);
    std::vector<SpeechChunk> chunks;
    if (words.empty()) return chunks;

    const int n = chunk_index_for(words.back().end, config.t_chunk);
    chunks.resize(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) {
        auto& c = chunks[static_cast<std::size_t>(i - 1)];
        c.index = i;
        c.span_start = static_cast<double>(i - 1) * config.t_chunk;
        c.span_end = static_cast<double>(i) * config.t_chunk;
    }
    for (const auto& w : words) {
        const int i = chunk_index_for(w.end, config.t_chunk);
        chunks[static_cast<std::size_t>(i - 1)].words.push_back(w);
    }
    chunks.back().is_final = true;
    chunks.back().span_end = words.back().end;
    return chunks;
}

std::int64_t thinking_budget(const ChunkingConfig& config)
{
    // A small slack keeps products like 0.1 × 30 from flooring one token short.
    return static_cast<std::int64_t>(std::floor(config.t_chunk * config.n_tps + 1e-9));
}

} // namespace shanks
