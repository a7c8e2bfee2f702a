#include "shanks/errors.hpp"
#include "shanks/timeline.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace shanks;

namespace {

std::vector<WordTiming> ending_at(std::initializer_list<double> ends)
{
    std::vector<WordTiming> out;
    double prev = 0.0;
    int n = 0;
    for (double e : ends) {
        out.push_back({"w" + std::to_string(++n), prev, e});
        prev = e;
    }
    return out;
}

// Reference segmentation: linear scan with the membership rule, no shortcuts.
std::vector<std::vector<std::string>> scan(const std::vector<WordTiming>& words, double t)
{
    std::vector<std::vector<std::string>> chunks;
    if (words.empty()) return chunks;
    int n = 1;
    while (n * t < words.back().end) ++n;
    chunks.resize(n);
    for (const auto& w : words)
        for (int i = 1; i <= n; ++i)
            if (w.end > (i - 1) * t && w.end <= i * t) chunks[i - 1].push_back(w.text);
    return chunks;
}

} // namespace

TEST_CASE("empty transcript segments to nothing")
{
    CHECK(segment_transcript({}, ChunkingConfig{}).empty());
}

TEST_CASE("boundary word stays in the earlier chunk")
{
    const auto words = ending_at({1.0, 3.9, 4.0, 5.2});
    const auto chunks = segment_transcript(words, ChunkingConfig{});
    REQUIRE(chunks.size() == 2);
    CHECK(chunks[0].words.size() == 3);
    CHECK(chunks[0].span_start == 0.0);
    CHECK(chunks[0].span_end == 4.0);
    CHECK_FALSE(chunks[0].is_final);
    CHECK(chunks[1].words.size() == 1);
    CHECK(chunks[1].words[0].end == 5.2);
    CHECK(chunks[1].span_start == 4.0);
    CHECK(chunks[1].span_end == 5.2);
    CHECK(chunks[1].is_final);
}

TEST_CASE("a 49.25 s turn gives 13 chunks")
{
    std::vector<WordTiming> words;
    for (int i = 0; i < 197; ++i) words.push_back({"x", i * 0.25, (i + 1) * 0.25});
    REQUIRE(words.back().end == 49.25);
    const auto chunks = segment_transcript(words, ChunkingConfig{});
    REQUIRE(chunks.size() == 13);
    CHECK(chunks.back().span_start == 48.0);
    CHECK(chunks.back().span_end == 49.25);
    for (std::size_t i = 0; i < chunks.size(); ++i) CHECK(chunks[i].index == static_cast<int>(i) + 1);
}

TEST_CASE("thinking budget")
{
    ChunkingConfig c;
    CHECK(thinking_budget(c) == 320);
    c.n_tps = 0;
    CHECK(thinking_budget(c) == 0);
    c.n_tps = 80;
    c.t_chunk = 3.0;
    CHECK(thinking_budget(c) == 240);
}

TEST_CASE("bad transcripts and configs are rejected")
{
    CHECK_THROWS_AS(segment_transcript(std::vector<WordTiming>{{"a", 1.0, 1.0}}, ChunkingConfig{}), ValidationError);
    CHECK_THROWS_AS(segment_transcript(std::vector<WordTiming>{{"a", 0.0, 2.0}, {"b", 1.5, 3.0}}, ChunkingConfig{}),
                    ValidationError);
    CHECK_THROWS_AS(segment_transcript(std::vector<WordTiming>{{"a", 2.0, 3.0}, {"b", 0.0, 1.0}}, ChunkingConfig{}),
                    ValidationError);
    ChunkingConfig c;
    c.t_chunk = 0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = {};
    c.max_context = 0;
    CHECK_THROWS_AS(validate(c), ValidationError);
    c = {};
    c.n_tps = -1;
    CHECK_THROWS_AS(validate(c), ValidationError);
}

TEST_CASE("segmentation is a partition matching the reference scan")
{
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const double t = std::uniform_int_distribution<int>(1, 8)(rng) * 0.5;
        const int n = std::uniform_int_distribution<int>(1, 60)(rng);
        std::vector<WordTiming> words;
        double clock = 0.0;
        for (int i = 0; i < n; ++i) {
            clock += std::uniform_int_distribution<int>(0, 40)(rng) * 0.01;
            const double end = clock + std::uniform_int_distribution<int>(1, 100)(rng) * 0.01;
            words.push_back({"w" + std::to_string(i), clock, end});
            clock = end;
        }
        ChunkingConfig c;
        c.t_chunk = t;
        const auto chunks = segment_transcript(words, c);
        const auto ref = scan(words, t);
        REQUIRE(chunks.size() == ref.size());
        std::vector<WordTiming> joined;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            CHECK(chunks[i].index == static_cast<int>(i) + 1);
            CHECK(chunks[i].is_final == (i + 1 == chunks.size()));
            std::vector<std::string> texts;
            for (const auto& w : chunks[i].words) {
                texts.push_back(w.text);
                joined.push_back(w);
                CHECK(w.end > chunks[i].span_start);
                CHECK(w.end <= chunks[i].span_end);
            }
            CHECK(texts == ref[i]);
        }
        CHECK(joined == words);
    }
}

TEST_CASE("chunk index uses half-open-left intervals")
{
    CHECK(chunk_index_for(0.0, 4.0) == 1);
    CHECK(chunk_index_for(4.0, 4.0) == 1);
    CHECK(chunk_index_for(4.0000001, 4.0) == 2);
    CHECK(chunk_index_for(0.3 * 3, 0.3) == 3);
}
