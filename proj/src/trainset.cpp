#include "shanks/trainset.hpp"

#include "shanks/errors.hpp"
#include "shanks/json.hpp"

#include <algorithm>

namespace shanks {

std::string to_string(BlockKind k)
{
    switch (k) {
    case BlockKind::Speech: return "speech";
    case BlockKind::Thinking: return "thinking";
    case BlockKind::ToolResponse: return "tool_response";
    case BlockKind::FinalResponse: return "final_response";
    case BlockKind::Marker: return "marker";
    }
    return "speech";
}

namespace {

BlockKind kind_from_string(const std::string& s)
{
    if (s == "speech") return BlockKind::Speech;
    if (s == "thinking") return BlockKind::Thinking;
    if (s == "tool_response") return BlockKind::ToolResponse;
    if (s == "final_response") return BlockKind::FinalResponse;
    if (s == "marker") return BlockKind::Marker;
    throw ValidationError("unknown block kind '" + s + "'");
}

} // namespace

std::string to_string(SequenceShape s)
{
    switch (s) {
    case SequenceShape::Plain: return "plain";
    case SequenceShape::Interrupt: return "interrupt";
    case SequenceShape::ToolCall: return "tool_call";
    }
    return "plain";
}

SequenceShape shape_from_string(const std::string& s)
{
    if (s == "plain") return SequenceShape::Plain;
    if (s == "interrupt") return SequenceShape::Interrupt;
    if (s == "tool_call") return SequenceShape::ToolCall;
    throw ValidationError("unknown sequence shape '" + s + "'");
}

bool expected_mask(const TrainBlock& block)
{
    switch (block.kind) {
    case BlockKind::Thinking:
    case BlockKind::FinalResponse: return true;
    case BlockKind::Speech:
    case BlockKind::ToolResponse: return false;
    case BlockKind::Marker:
        return block.tokens.size() == 1 &&
               (block.tokens[0] == marker::kThinkOpen || block.tokens[0] == marker::kThinkClose ||
                block.tokens[0] == marker::kInterrupt);
    }
    return false;
}

namespace {

TrainBlock make_block(BlockKind kind, Tokens tokens)
{
    TrainBlock b{kind, std::move(tokens), false};
    b.loss_mask = expected_mask(b);
    return b;
}

Tokens speech_tokens(const SpeechChunk& c)
{
    Tokens out;
    out.reserve(c.words.size());
    for (const auto& w : c.words) out.push_back(w.text);
    return out;
}

bool is_wrapped(const Tokens& t)
{
    return t.size() >= 2 && t.front() == marker::kThinkOpen && t.back() == marker::kThinkClose;
}

// Content without think markers.
Tokens unwrap(const Tokens& t)
{
    if (is_wrapped(t)) return Tokens(t.begin() + 1, t.end() - 1);
    return t;
}

Tokens wrap(const Tokens& content)
{
    Tokens out{std::string(marker::kThinkOpen)};
    out.insert(out.end(), content.begin(), content.end());
    out.emplace_back(marker::kThinkClose);
    return out;
}

void push_speech(TrainSequence& seq, const SpeechChunk& chunk, bool final)
{
    seq.blocks.push_back(make_block(BlockKind::Speech, speech_tokens(chunk)));
    seq.blocks.push_back(make_block(
        BlockKind::Marker, {std::string(final ? marker::kEndOfAudio : marker::kEndOfPartialAudio)}));
}

void check_lengths(std::size_t chunks, std::size_t thinkings)
{
    if (chunks == 0) throw ValidationError("a training sequence needs at least one speech chunk");
    if (chunks != thinkings)
        throw ValidationError("got " + std::to_string(chunks) + " speech chunks but " + std::to_string(thinkings) +
                              " thinking chunks");
}

void finish(TrainSequence& seq, const Tokens& response)
{
    if (response.empty()) throw ValidationError("final response must not be empty");
    seq.blocks.push_back(make_block(BlockKind::FinalResponse, response));
}

} // namespace

TrainSequence assemble_plain(std::span<const SpeechChunk> chunks, std::span<const Tokens> thinkings,
                             const Tokens& response)
{
    check_lengths(chunks.size(), thinkings.size());
    TrainSequence seq;
    seq.shape = SequenceShape::Plain;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        push_speech(seq, chunks[i], i + 1 == chunks.size());
        seq.blocks.push_back(make_block(BlockKind::Thinking, wrap(unwrap(thinkings[i]))));
    }
    finish(seq, response);
    return seq;
}

TrainSequence assemble_interrupt(std::span<const SpeechChunk> chunks, std::span<const Tokens> thinkings,
                                 const Tokens& response)
{
    check_lengths(chunks.size(), thinkings.size());
    const std::size_t k = thinkings.size();
    for (std::size_t i = 0; i + 1 < k; ++i)
        if (contains(thinkings[i], marker::kInterrupt))
            throw ValidationError("[INTERRUPT] appears in R_" + std::to_string(i + 1) + " before the last chunk");
    if (!contains(thinkings[k - 1], marker::kInterrupt))
        throw ValidationError("R_" + std::to_string(k) + " must contain [INTERRUPT]");

    TrainSequence seq;
    seq.shape = SequenceShape::Interrupt;
    for (std::size_t i = 0; i < k; ++i) {
        push_speech(seq, chunks[i], false); // the user never finished
        seq.blocks.push_back(make_block(BlockKind::Thinking, wrap(unwrap(thinkings[i]))));
    }
    finish(seq, response);
    return seq;
}

TrainSequence assemble_toolcall(std::span<const SpeechChunk> chunks, std::span<const Tokens> thinkings,
                                std::span<const Placement> placements, const Tokens& response)
{
    check_lengths(chunks.size(), thinkings.size());
    std::vector<std::vector<const Placement*>> by_chunk(thinkings.size());
    for (const auto& p : placements) {
        if (p.chunk < 1 || static_cast<std::size_t>(p.chunk) > thinkings.size())
            throw ValidationError("placement refers to thinking chunk " + std::to_string(p.chunk) + " of " +
                                  std::to_string(thinkings.size()));
        const auto content = unwrap(thinkings[static_cast<std::size_t>(p.chunk - 1)]);
        if (p.position > content.size())
            throw ValidationError("placement position " + std::to_string(p.position) + " is past the end of R_" +
                                  std::to_string(p.chunk));
        by_chunk[static_cast<std::size_t>(p.chunk - 1)].push_back(&p);
    }

    TrainSequence seq;
    seq.shape = SequenceShape::ToolCall;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        push_speech(seq, chunks[i], i + 1 == chunks.size());
        auto content = unwrap(thinkings[i]);
        auto& ps = by_chunk[i];
        std::stable_sort(ps.begin(), ps.end(), [](const auto* a, const auto* b) { return a->position < b->position; });
        for (std::size_t j = 1; j < ps.size(); ++j)
            if (ps[j]->position == ps[j - 1]->position)
                throw ValidationError("two tool responses share position " + std::to_string(ps[j]->position) +
                                      " in R_" + std::to_string(i + 1));
        if (ps.empty() && content.empty()) content = tokenize(kNoCallTemplate);

        Tokens fragment{std::string(marker::kThinkOpen)};
        std::size_t at = 0;
        for (const auto* p : ps) {
            fragment.insert(fragment.end(), content.begin() + static_cast<std::ptrdiff_t>(at),
                            content.begin() + static_cast<std::ptrdiff_t>(p->position));
            seq.blocks.push_back(make_block(BlockKind::Thinking, std::move(fragment)));
            seq.blocks.push_back(make_block(BlockKind::ToolResponse, p->payload));
            fragment.clear();
            at = p->position;
        }
        fragment.insert(fragment.end(), content.begin() + static_cast<std::ptrdiff_t>(at), content.end());
        fragment.emplace_back(marker::kThinkClose);
        seq.blocks.push_back(make_block(BlockKind::Thinking, std::move(fragment)));
    }
    finish(seq, response);
    return seq;
}

std::vector<std::string> validate_sequence(const TrainSequence& seq)
{
    std::vector<std::string> errs;
    const auto& b = seq.blocks;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[i].loss_mask != expected_mask(b[i]))
            errs.push_back("block " + std::to_string(i) + " (" + to_string(b[i].kind) + ") has loss_mask=" +
                           (b[i].loss_mask ? "true" : "false") + ", expected " +
                           (expected_mask(b[i]) ? "true" : "false"));
        if (b[i].kind == BlockKind::Marker && b[i].tokens.size() != 1)
            errs.push_back("block " + std::to_string(i) + " is a marker block with " +
                           std::to_string(b[i].tokens.size()) + " tokens");
    }

    std::size_t p = 0;
    int group = 0;
    bool saw_end_of_audio = false;
    bool saw_interrupt = false;
    while (p < b.size() && b[p].kind != BlockKind::FinalResponse) {
        ++group;
        const std::string where = "chunk " + std::to_string(group) + ": ";
        if (b[p].kind != BlockKind::Speech) {
            errs.push_back(where + "expected a speech block at block " + std::to_string(p));
            return errs;
        }
        ++p;
        if (p >= b.size() || b[p].kind != BlockKind::Marker || b[p].tokens.size() != 1 ||
            (b[p].tokens[0] != marker::kEndOfPartialAudio && b[p].tokens[0] != marker::kEndOfAudio)) {
            errs.push_back(where + "speech must be followed by [EOPA] or [EOA]");
            return errs;
        }
        const bool eoa = b[p].tokens[0] == marker::kEndOfAudio;
        ++p;
        if (saw_end_of_audio) errs.push_back(where + "speech after [EOA]");
        saw_end_of_audio = saw_end_of_audio || eoa;
        if (eoa && seq.shape == SequenceShape::Interrupt) errs.push_back(where + "interrupt sequences never reach [EOA]");

        // Thinking fragments, optionally separated by tool responses.
        Tokens joined;
        std::size_t fragments = 0;
        while (p < b.size() && b[p].kind == BlockKind::Thinking) {
            const auto& frag = b[p].tokens;
            const bool first = fragments == 0;
            if (first && (frag.empty() || frag.front() != marker::kThinkOpen))
                errs.push_back(where + "thinking must open with <think>");
            joined.insert(joined.end(), frag.begin(), frag.end());
            ++fragments;
            ++p;
            if (p < b.size() && b[p].kind == BlockKind::ToolResponse) {
                if (seq.shape != SequenceShape::ToolCall)
                    errs.push_back(where + "tool responses only appear in tool_call sequences");
                ++p;
                if (p >= b.size() || b[p].kind != BlockKind::Thinking) {
                    errs.push_back(where + "a tool response must be followed by more thinking");
                    return errs;
                }
            }
        }
        if (fragments == 0) {
            errs.push_back(where + "missing thinking after the speech chunk");
            return errs;
        }
        if (joined.back() != marker::kThinkClose) errs.push_back(where + "thinking must close with </think>");
        const bool interrupt = contains(joined, marker::kInterrupt);
        if (interrupt && seq.shape != SequenceShape::Interrupt)
            errs.push_back(where + "[INTERRUPT] outside an interrupt sequence");
        if (seq.shape == SequenceShape::Interrupt) {
            const bool last = p < b.size() && b[p].kind == BlockKind::FinalResponse;
            if (last && !interrupt) errs.push_back(where + "the last thinking chunk must contain [INTERRUPT]");
            if (!last && interrupt) errs.push_back(where + "[INTERRUPT] before the last thinking chunk");
            saw_interrupt = saw_interrupt || interrupt;
        }
    }
    if (group == 0) errs.push_back("sequence has no speech chunks");
    if (p >= b.size()) {
        errs.push_back("sequence must end with a final response");
        return errs;
    }
    if (p + 1 != b.size()) errs.push_back("blocks after the final response");
    if (b[p].tokens.empty()) errs.push_back("final response is empty");
    if (seq.shape != SequenceShape::Interrupt && !saw_end_of_audio) errs.push_back("sequence never delivers [EOA]");
    if (seq.shape == SequenceShape::Interrupt && !saw_interrupt) errs.push_back("interrupt sequence has no [INTERRUPT]");
    return errs;
}

std::string serialize_sequence(const TrainSequence& seq)
{
    ojson blocks = ojson::array();
    for (const auto& b : seq.blocks)
        blocks.push_back(ojson{{"kind", to_string(b.kind)}, {"tokens", b.tokens}, {"mask", b.loss_mask}});
    return ojson{{"id", seq.id}, {"shape", to_string(seq.shape)}, {"blocks", std::move(blocks)}}.dump();
}

TrainSequence parse_sequence(std::string_view line)
{
    const auto j = ojson::parse(line);
    TrainSequence seq;
    seq.id = j.value("id", std::string());
    seq.shape = shape_from_string(j.at("shape").get<std::string>());
    for (const auto& b : j.at("blocks"))
        seq.blocks.push_back({kind_from_string(b.at("kind").get<std::string>()), b.at("tokens").get<Tokens>(),
                              b.at("mask").get<bool>()});
    return seq;
}

std::string serialize_corpus(std::span<const TrainSequence> corpus)
{
    std::string out;
    for (const auto& s : corpus) {
        out += serialize_sequence(s);
        out += '\n';
    }
    return out;
}

namespace {

template <typename F>
void for_each_line(std::string_view text, F&& f)
{
    std::size_t number = 0;
    while (!text.empty()) {
        ++number;
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) f(number, line);
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
}

} // namespace

std::vector<TrainSequence> parse_corpus(std::string_view text, const std::string& source)
{
    std::vector<TrainSequence> out;
    for_each_line(text, [&](std::size_t number, std::string_view line) {
        try {
            out.push_back(parse_sequence(line));
        } catch (const std::exception& e) {
            throw ValidationError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    });
    return out;
}

std::vector<CorpusDiagnostic> validate_corpus(std::string_view text)
{
    std::vector<CorpusDiagnostic> out;
    for_each_line(text, [&](std::size_t number, std::string_view line) {
        TrainSequence seq;
        try {
            seq = parse_sequence(line);
        } catch (const std::exception& e) {
            out.push_back({number, "", e.what()});
            return;
        }
        for (auto& msg : validate_sequence(seq)) out.push_back({number, seq.id, std::move(msg)});
    });
    return out;
}

std::vector<TrainTuple> parse_tuples(std::string_view text, const std::string& source)
{
    std::vector<TrainTuple> out;
    for_each_line(text, [&](std::size_t number, std::string_view line) {
        try {
            const auto j = ojson::parse(line);
            TrainTuple t;
            t.id = j.value("id", std::string());
            t.shape = shape_from_string(j.value("shape", std::string("plain")));
            t.words = j.at("words").get<std::vector<WordTiming>>();
            t.thinkings = j.at("thinkings").get<std::vector<Tokens>>();
            t.response = j.at("response").get<Tokens>();
            if (j.contains("placements"))
                for (const auto& p : j.at("placements"))
                    t.placements.push_back(
                        {p.at("chunk").get<int>(), p.at("position").get<std::size_t>(), p.at("payload").get<Tokens>()});
            out.push_back(std::move(t));
        } catch (const std::exception& e) {
            throw ValidationError(source + ":" + std::to_string(number) + ": " + e.what());
        }
    });
    return out;
}

std::string serialize_tuples(std::span<const TrainTuple> tuples)
{
    std::string out;
    for (const auto& t : tuples) {
        ojson placements = ojson::array();
        for (const auto& p : t.placements)
            placements.push_back(ojson{{"chunk", p.chunk}, {"position", p.position}, {"payload", p.payload}});
        out += ojson{{"id", t.id},
                     {"shape", to_string(t.shape)},
                     {"words", t.words},
                     {"thinkings", t.thinkings},
                     {"response", t.response},
                     {"placements", std::move(placements)}}
                   .dump();
        out += '\n';
    }
    return out;
}

TrainSequence assemble_tuple(const TrainTuple& t, const ChunkingConfig& config)
{
    auto chunks = segment_transcript(t.words, config);
    TrainSequence seq;
    switch (t.shape) {
    case SequenceShape::Plain: seq = assemble_plain(chunks, t.thinkings, t.response); break;
    case SequenceShape::Interrupt:
        if (t.thinkings.size() > chunks.size())
            throw ValidationError("tuple '" + t.id + "' has more thinking chunks than speech chunks");
        chunks.resize(t.thinkings.size());
        seq = assemble_interrupt(chunks, t.thinkings, t.response);
        break;
    case SequenceShape::ToolCall: seq = assemble_toolcall(chunks, t.thinkings, t.placements, t.response); break;
    }
    seq.id = t.id;
    return seq;
}

} // namespace shanks
