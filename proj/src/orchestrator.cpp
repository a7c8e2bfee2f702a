#include "shanks/orchestrator.hpp"

#include "shanks/errors.hpp"

#include <json.hpp>

#include <algorithm>

namespace shanks {

std::string to_string(Mode m)
{
    switch (m) {
    case Mode::Shanks: return "shanks";
    case Mode::CallAfterListen: return "call-after-listen";
    case Mode::Combined: return "combined";
    }
    return "shanks";
}

Mode mode_from_string(const std::string& s)
{
    if (s == "shanks") return Mode::Shanks;
    if (s == "call-after-listen") return Mode::CallAfterListen;
    if (s == "combined") return Mode::Combined;
    throw ValidationError("unknown mode '" + s + "'");
}

std::string to_string(TraceStatus s)
{
    switch (s) {
    case TraceStatus::Completed: return "completed";
    case TraceStatus::ContextOverflow: return "context_overflow";
    case TraceStatus::TransportError: return "transport_error";
    case TraceStatus::IterationCapExceeded: return "iteration_cap_exceeded";
    }
    return "completed";
}

TraceStatus status_from_string(const std::string& s)
{
    if (s == "completed") return TraceStatus::Completed;
    if (s == "context_overflow") return TraceStatus::ContextOverflow;
    if (s == "transport_error") return TraceStatus::TransportError;
    if (s == "iteration_cap_exceeded") return TraceStatus::IterationCapExceeded;
    throw ValidationError("unknown trace status '" + s + "'");
}

const ResponseChunk* TurnTrace::response() const
{
    for (auto it = events.rbegin(); it != events.rend(); ++it)
        if (const auto* r = std::get_if<ResponseEmitted>(&*it)) return &r->response;
    return nullptr;
}

Tokens build_preamble(const Scenario& scenario)
{
    Tokens out;
    if (scenario.system_preamble) out = tokenize(*scenario.system_preamble);
    for (const auto& tool : scenario.tools) {
        nlohmann::ordered_json desc;
        desc["name"] = tool.name;
        desc["description"] = tool.description;
        auto& params = desc["parameters"] = nlohmann::ordered_json::object();
        for (const auto& [name, p] : tool.parameters)
            params[name] = {{"type", p.type}, {"required", p.required}, {"description", p.description}};
        for (auto& t : tokenize(desc.dump())) out.push_back(std::move(t));
    }
    return out;
}

namespace {

void append_event(Tokens& ctx, const TraceEvent& event, const Tokens& preamble)
{
    std::visit(
        [&](const auto& e) {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, ChunkDelivered>) {
                for (const auto& w : e.chunk.words) ctx.push_back(w.text);
                ctx.emplace_back(e.chunk.is_final ? marker::kEndOfAudio : marker::kEndOfPartialAudio);
            } else if constexpr (std::is_same_v<T, ThinkingGenerated>) {
                ctx.insert(ctx.end(), e.chunk.tokens.begin(), e.chunk.tokens.end());
            } else if constexpr (std::is_same_v<T, ResponseEmitted>) {
                ctx.insert(ctx.end(), e.response.tokens.begin(), e.response.tokens.end());
            } else if constexpr (std::is_same_v<T, ContextRebuilt>) {
                ctx = preamble;
            }
        },
        event);
}

} // namespace

Tokens build_context(std::span<const TraceEvent> events, const Tokens& preamble)
{
    Tokens ctx = preamble;
    for (const auto& e : events) append_event(ctx, e, preamble);
    return ctx;
}

namespace {

struct Abort {
    TraceStatus status;
    std::string message;
};

// Call tokens plus the response they received, replayed into a later context.
struct Carry {
    Tokens call;
    Tokens payload;
};

class Session {
public:
    Session(const Scenario& scenario, Backend& backend, ToolEnvironment& tools, const SessionConfig& config,
            Mode mode)
        : backend_(backend), tools_(tools), config_(config)
    {
        validate(config.chunking);
        if (!(config.chunking.n_tps > 0.0))
            throw ValidationError("simulation needs n_tps > 0 to place tokens on the clock");
        if (config.iteration_cap < 1) throw ValidationError("iteration_cap must be at least 1");
        if (scenario.words.empty()) throw ValidationError("scenario '" + scenario.id + "' has no words");
        validate_words(scenario.words);

        trace_.scenario_id = scenario.id;
        trace_.mode = mode;
        trace_.config = config;
        if (config.include_preamble) preamble_ = build_preamble(scenario);
        context_ = preamble_;
    }

    TurnTrace finish(TraceStatus status = TraceStatus::Completed, std::string message = {})
    {
        trace_.status = status;
        trace_.error = std::move(message);
        return std::move(trace_);
    }

    void set_eoa_time(double t) { eoa_time_ = t; }
    double rate() const { return config_.chunking.n_tps; }
    const std::vector<Carry>& successes() const { return successes_; }

    void record(TraceEvent event)
    {
        append_event(context_, event, preamble_);
        trace_.events.push_back(std::move(event));
    }

    void deliver(const SpeechChunk& chunk, double time)
    {
        record(ChunkDelivered{time, chunk});
        if (chunk.is_final) trace_.eoa_time = time;
    }

    void rebuild(double time) { record(ContextRebuilt{time}); }

    ThinkingChunk think(int index, double start, std::optional<std::int64_t> budget, bool after_eoa,
                        std::span<const Carry> carried = {})
    {
        ThinkingChunk ch;
        ch.index = index;
        ch.start_time = start;
        ch.after_end_of_audio = after_eoa;
        ch.tokens.emplace_back(marker::kThinkOpen);
        for (const auto& c : carried) {
            ch.tokens.insert(ch.tokens.end(), c.call.begin(), c.call.end());
            ch.carried_tokens += c.call.size();
            if (!c.payload.empty()) ch.splices.push_back({ch.tokens.size(), c.payload.size()});
            ch.tokens.insert(ch.tokens.end(), c.payload.begin(), c.payload.end());
            ch.injected_tool_tokens += c.payload.size();
        }

        const std::vector<std::string> stops{std::string(marker::kThinkClose), std::string(marker::kToolCallClose)};
        std::vector<ToolExchange> exchanges;
        std::size_t resolved_until = ch.tokens.size(); // tool spans before this are settled
        std::int64_t used = 0;
        bool closed = false;

        while (true) {
            std::optional<std::int64_t> remaining;
            if (budget) remaining = *budget - used;
            if (remaining && *remaining <= 0) {
                ch.truncated = true;
                break;
            }
            GenerationRequest req;
            req.context = context_;
            req.context.insert(req.context.end(), ch.tokens.begin(), ch.tokens.end());
            const std::int64_t room = config_.chunking.max_context - static_cast<std::int64_t>(req.context.size());
            if (room <= 0) throw Abort{TraceStatus::ContextOverflow, "context reached max_context before thinking"};
            req.max_tokens = remaining ? std::min(*remaining, room) : room;
            req.stop_markers = stops;
            if (after_eoa && ++post_eoa_generations_ > config_.iteration_cap)
                throw Abort{TraceStatus::IterationCapExceeded,
                            "more than " + std::to_string(config_.iteration_cap) + " generations after end of audio"};

            const auto res = call_backend(req);
            ch.tokens.insert(ch.tokens.end(), res.tokens.begin(), res.tokens.end());
            used += static_cast<std::int64_t>(res.tokens.size());

            if (res.finish == FinishReason::Stopped && res.tokens.back() == marker::kToolCallClose) {
                const double now = start + static_cast<double>(ch.generated_tokens()) / rate();
                exchanges.push_back(resolve_call(ch, resolved_until, now));
                resolved_until = ch.tokens.size();
                continue;
            }
            if (res.finish == FinishReason::Stopped) {
                closed = true;
                break;
            }
            if (res.finish == FinishReason::BudgetExhausted) {
                if (!remaining || req.max_tokens < *remaining)
                    throw Abort{TraceStatus::ContextOverflow, "context reached max_context while thinking"};
                ch.truncated = true;
            }
            break;
        }
        if (!closed) ch.tokens.emplace_back(marker::kThinkClose);
        ch.contains_interrupt = contains(ch.tokens, marker::kInterrupt);
        ch.end_time = start + static_cast<double>(ch.generated_tokens()) / rate();

        for (auto& ex : exchanges) record(std::move(ex));
        record(ThinkingGenerated{ch});
        if (after_eoa) trace_.post_turn_tokens += static_cast<std::int64_t>(ch.generated_tokens());
        return ch;
    }

    /// Response right after a block that started at `start` and emitted `preceding` tokens.
    const ResponseChunk& respond(double start, std::size_t preceding)
    {
        GenerationRequest req;
        req.context = context_;
        const std::int64_t room = config_.chunking.max_context - static_cast<std::int64_t>(req.context.size());
        if (room <= 0) throw Abort{TraceStatus::ContextOverflow, "context reached max_context before responding"};
        req.max_tokens = room;
        const auto res = call_backend(req);
        if (res.finish == FinishReason::BudgetExhausted)
            throw Abort{TraceStatus::ContextOverflow, "context reached max_context while responding"};
        ResponseChunk out{res.tokens, start + static_cast<double>(preceding + 1) / rate()};
        if (trace_.eoa_time) trace_.post_turn_tokens += static_cast<std::int64_t>(out.tokens.size());
        record(ResponseEmitted{std::move(out)});
        return std::get<ResponseEmitted>(trace_.events.back()).response;
    }

    void mark_interrupted(int k, const ResponseChunk& response, std::optional<SpeechChunk> overlap)
    {
        trace_.interrupted_at = k;
        trace_.t_interrupt = response.emit_time;
        trace_.undelivered_overlap = std::move(overlap);
    }

private:
    GenerationResult call_backend(const GenerationRequest& req)
    {
        GenerationResult raw;
        try {
            raw = backend_.generate(req);
        } catch (const ContextOverflowError& e) {
            throw Abort{TraceStatus::ContextOverflow, e.what()};
        } catch (const TransportError& e) {
            throw Abort{TraceStatus::TransportError,
                        std::string(e.what()) + (e.retriable() ? " (retriable)" : " (not retriable)")};
        }
        // Stop and budget rules are enforced here whatever the backend did.
        auto res = shape_continuation(raw.tokens, req.max_tokens, req.stop_markers);
        if (res.finish == FinishReason::EndOfSequence && raw.finish == FinishReason::BudgetExhausted)
            res.finish = FinishReason::BudgetExhausted;
        return res;
    }

    ToolExchange resolve_call(ThinkingChunk& ch, std::size_t from, double now)
    {
        const std::size_t close = ch.tokens.size() - 1;
        std::size_t open = close;
        for (std::size_t i = close; i > from; --i) {
            if (ch.tokens[i - 1] == marker::kToolCallOpen) {
                open = i - 1;
                break;
            }
        }
        ToolExchange ex;
        ex.time = now;
        ex.thinking_index = ch.index;
        std::optional<ToolCall> call;
        if (open < close) {
            auto parsed = parse_tool_calls(std::span<const Token>(ch.tokens).subspan(open, close + 1 - open));
            if (parsed.calls.size() == 1) {
                call = std::move(parsed.calls.front());
                call->raw_span = {open, close + 1};
            }
        }
        if (call) {
            ex.call = *call;
            ex.outcome = tools_.match(*call, now, eoa_time_);
        } else {
            ex.malformed = true;
            ex.call.raw_span = {open, close + 1};
            ex.outcome.is_error = true;
            ex.outcome.response_payload = std::string(kGenericToolError);
            ex.outcome.phase = now < eoa_time_ ? CallPhase::Early : CallPhase::Late;
        }
        if (ex.outcome.matched && !ex.outcome.replay) {
            Tokens call_tokens(ch.tokens.begin() + static_cast<std::ptrdiff_t>(ex.call.raw_span.begin),
                               ch.tokens.begin() + static_cast<std::ptrdiff_t>(ex.call.raw_span.end));
            successes_.push_back({std::move(call_tokens), tokenize(ex.outcome.response_payload)});
        }
        ch = inject_tool_response(ch, ex.call, ex.outcome);
        return ex;
    }

    Backend& backend_;
    ToolEnvironment& tools_;
    SessionConfig config_;
    Tokens preamble_;
    Tokens context_;
    TurnTrace trace_;
    double eoa_time_ = 0.0;
    int post_eoa_generations_ = 0;
    std::vector<Carry> successes_;
};

SpeechChunk whole_turn(const Scenario& scenario)
{
    SpeechChunk c;
    c.index = 1;
    c.span_start = 0.0;
    c.span_end = scenario.duration();
    c.words = scenario.words;
    c.is_final = true;
    return c;
}

template <typename Body>
TurnTrace drive(Session& session, Body&& body)
{
    try {
        body();
    } catch (const Abort& a) {
        return session.finish(a.status, a.message);
    }
    return session.finish();
}

// Runs S_1,R_1,…,S_upto,R_upto. Returns true if the turn ended in an interruption.
bool listen_and_think(Session& s, const std::vector<SpeechChunk>& chunks, int upto, const SessionConfig& config)
{
    const double t = config.chunking.t_chunk;
    const auto budget = thinking_budget(config.chunking);
    for (int i = 1; i <= upto; ++i) {
        s.deliver(chunks[static_cast<std::size_t>(i - 1)], i * t);
        const auto r = s.think(i, i * t, budget, false);
        if (r.contains_interrupt) {
            const auto& o = s.respond(r.start_time, r.generated_tokens());
            std::optional<SpeechChunk> overlap;
            if (static_cast<std::size_t>(i) < chunks.size()) overlap = chunks[static_cast<std::size_t>(i)];
            s.mark_interrupted(i, o, std::move(overlap));
            return true;
        }
    }
    return false;
}

} // namespace

TurnTrace run_shanks(const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
                     const SessionConfig& config)
{
    Session s(scenario, backend, tools, config, Mode::Shanks);
    const auto chunks = segment_transcript(scenario.words, config.chunking);
    const int n = static_cast<int>(chunks.size());
    const double t = config.chunking.t_chunk;
    s.set_eoa_time(n * t);
    return drive(s, [&] {
        if (listen_and_think(s, chunks, n - 1, config)) return;
        s.deliver(chunks.back(), n * t);
        const auto r = s.think(n, n * t, config.chunking.final_budget, true);
        s.respond(r.start_time, r.generated_tokens());
    });
}

TurnTrace run_call_after_listen(const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
                                const SessionConfig& config)
{
    Session s(scenario, backend, tools, config, Mode::CallAfterListen);
    const double end = scenario.duration();
    s.set_eoa_time(end);
    return drive(s, [&] {
        s.deliver(whole_turn(scenario), end);
        const auto r = s.think(1, end, config.chunking.final_budget, true);
        s.respond(r.start_time, r.generated_tokens());
    });
}

TurnTrace run_combined(const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
                       const SessionConfig& config)
{
    Session s(scenario, backend, tools, config, Mode::Combined);
    const auto chunks = segment_transcript(scenario.words, config.chunking);
    const int n = static_cast<int>(chunks.size());
    const double eoa = n * config.chunking.t_chunk;
    s.set_eoa_time(eoa);
    return drive(s, [&] {
        if (listen_and_think(s, chunks, n - 1, config)) return;
        const auto carried = s.successes();
        s.rebuild(eoa);
        s.deliver(whole_turn(scenario), eoa);
        const auto r = s.think(n, eoa, config.chunking.final_budget, true, carried);
        s.respond(r.start_time, r.generated_tokens());
    });
}

TurnTrace run(Mode mode, const Scenario& scenario, Backend& backend, ToolEnvironment& tools,
              const SessionConfig& config)
{
    switch (mode) {
    case Mode::Shanks: return run_shanks(scenario, backend, tools, config);
    case Mode::CallAfterListen: return run_call_after_listen(scenario, backend, tools, config);
    case Mode::Combined: return run_combined(scenario, backend, tools, config);
    }
    throw ValidationError("unknown mode");
}

ToolEnvironment make_environment(const Scenario& scenario, std::shared_ptr<const CallMatcher> matcher)
{
    return ToolEnvironment(scenario.tools, scenario.ground_truth_calls, std::move(matcher));
}

} // namespace shanks
