#include "shanks/json.hpp"

#include "shanks/errors.hpp"

namespace shanks {

namespace {

template <typename T>
ojson opt(const std::optional<T>& v)
{
    return v ? ojson(*v) : ojson(nullptr);
}

nlohmann::json to_plain(const ojson& j)
{
    return nlohmann::json::parse(j.dump());
}

ojson to_ordered(const nlohmann::json& j)
{
    return ojson::parse(j.dump());
}

} // namespace

std::optional<double> optional_number(const ojson& j, const char* key)
{
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

void to_json(ojson& j, const WordTiming& w)
{
    j = ojson{{"text", w.text}, {"start", w.start}, {"end", w.end}};
}

void from_json(const ojson& j, WordTiming& w)
{
    w.text = j.at("text").get<std::string>();
    w.start = j.at("start").get<double>();
    w.end = j.at("end").get<double>();
}

void to_json(ojson& j, const ChunkingConfig& c)
{
    j = ojson{{"t_chunk", c.t_chunk}, {"n_tps", c.n_tps}, {"max_context", c.max_context},
              {"final_budget", opt(c.final_budget)}};
}

void from_json(const ojson& j, ChunkingConfig& c)
{
    c = ChunkingConfig{};
    c.t_chunk = j.value("t_chunk", c.t_chunk);
    c.n_tps = j.value("n_tps", c.n_tps);
    c.max_context = j.value("max_context", c.max_context);
    c.final_budget.reset();
    if (j.contains("final_budget") && !j.at("final_budget").is_null())
        c.final_budget = j.at("final_budget").get<std::int64_t>();
}

void to_json(ojson& j, const SessionConfig& c)
{
    j = c.chunking;
    j["iteration_cap"] = c.iteration_cap;
    j["include_preamble"] = c.include_preamble;
}

void from_json(const ojson& j, SessionConfig& c)
{
    c.chunking = j.get<ChunkingConfig>();
    c.iteration_cap = j.value("iteration_cap", 16);
    c.include_preamble = j.value("include_preamble", true);
}

void to_json(ojson& j, const SpeechChunk& c)
{
    j = ojson{{"index", c.index},       {"span_start", c.span_start}, {"span_end", c.span_end},
              {"is_final", c.is_final}, {"words", c.words}};
}

void from_json(const ojson& j, SpeechChunk& c)
{
    c.index = j.at("index").get<int>();
    c.span_start = j.at("span_start").get<double>();
    c.span_end = j.at("span_end").get<double>();
    c.is_final = j.at("is_final").get<bool>();
    c.words = j.at("words").get<std::vector<WordTiming>>();
}

void to_json(ojson& j, const ThinkingChunk& c)
{
    ojson splices = ojson::array();
    for (const auto& s : c.splices) splices.push_back(ojson::array({s.offset, s.length}));
    j = ojson{{"index", c.index},
              {"start_time", c.start_time},
              {"end_time", c.end_time},
              {"after_end_of_audio", c.after_end_of_audio},
              {"truncated", c.truncated},
              {"contains_interrupt", c.contains_interrupt},
              {"injected_tool_tokens", c.injected_tool_tokens},
              {"carried_tokens", c.carried_tokens},
              {"splices", std::move(splices)},
              {"tokens", c.tokens}};
}

void from_json(const ojson& j, ThinkingChunk& c)
{
    c.index = j.at("index").get<int>();
    c.start_time = j.at("start_time").get<double>();
    c.end_time = j.at("end_time").get<double>();
    c.after_end_of_audio = j.at("after_end_of_audio").get<bool>();
    c.truncated = j.at("truncated").get<bool>();
    c.contains_interrupt = j.at("contains_interrupt").get<bool>();
    c.injected_tool_tokens = j.at("injected_tool_tokens").get<std::size_t>();
    c.carried_tokens = j.value("carried_tokens", std::size_t{0});
    c.splices.clear();
    for (const auto& s : j.at("splices")) c.splices.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    c.tokens = j.at("tokens").get<Tokens>();
}

void to_json(ojson& j, const ParameterSpec& p)
{
    j = ojson{{"type", p.type}, {"required", p.required}, {"description", p.description}};
}

void from_json(const ojson& j, ParameterSpec& p)
{
    p.type = j.value("type", std::string("string"));
    p.required = j.value("required", false);
    p.description = j.value("description", std::string());
}

void to_json(ojson& j, const ToolSpec& t)
{
    ojson params = ojson::object();
    for (const auto& [name, p] : t.parameters) params[name] = p;
    j = ojson{{"name", t.name}, {"description", t.description}, {"parameters", std::move(params)}};
}

void from_json(const ojson& j, ToolSpec& t)
{
    t.name = j.at("name").get<std::string>();
    t.description = j.value("description", std::string());
    t.parameters.clear();
    if (j.contains("parameters")) {
        for (const auto& [name, p] : j.at("parameters").items()) {
            if (!t.parameters.emplace(name, p.get<ParameterSpec>()).second)
                throw ValidationError("tool '" + t.name + "' repeats parameter '" + name + "'");
        }
    }
}

void to_json(ojson& j, const GroundTruthCall& c)
{
    j = ojson{{"id", c.id},
              {"name", c.name},
              {"arguments", to_ordered(c.arguments)},
              {"response", c.response},
              {"depends_on", c.depends_on},
              {"earliest_time", opt(c.earliest_time)},
              {"answer_key", opt(c.answer_key)}};
}

void from_json(const ojson& j, GroundTruthCall& c)
{
    c.id = j.at("id").get<int>();
    c.name = j.at("name").get<std::string>();
    c.arguments = to_plain(j.value("arguments", ojson::object()));
    c.response = j.at("response").get<std::string>();
    c.depends_on = j.value("depends_on", std::set<int>{});
    c.earliest_time = optional_number(j, "earliest_time");
    c.answer_key.reset();
    if (j.contains("answer_key") && !j.at("answer_key").is_null()) c.answer_key = j.at("answer_key").get<std::string>();
}

void to_json(ojson& j, const ToolCall& c)
{
    j = ojson{{"name", c.name},
              {"arguments", to_ordered(c.arguments)},
              {"raw_span", ojson::array({c.raw_span.begin, c.raw_span.end})}};
}

void from_json(const ojson& j, ToolCall& c)
{
    c.name = j.at("name").get<std::string>();
    c.arguments = to_plain(j.at("arguments"));
    c.raw_span = {j.at("raw_span").at(0).get<std::size_t>(), j.at("raw_span").at(1).get<std::size_t>()};
}

void to_json(ojson& j, const MatchOutcome& m)
{
    j = ojson{{"matched", opt(m.matched)},
              {"is_error", m.is_error},
              {"replay", m.replay},
              {"phase", m.phase == CallPhase::Early ? "early" : "late"},
              {"payload", m.response_payload}};
}

void from_json(const ojson& j, MatchOutcome& m)
{
    m.matched.reset();
    if (!j.at("matched").is_null()) m.matched = j.at("matched").get<int>();
    m.is_error = j.at("is_error").get<bool>();
    m.replay = j.value("replay", false);
    const auto phase = j.at("phase").get<std::string>();
    if (phase != "early" && phase != "late") throw ValidationError("unknown call phase '" + phase + "'");
    m.phase = phase == "early" ? CallPhase::Early : CallPhase::Late;
    m.response_payload = j.at("payload").get<std::string>();
}

void to_json(ojson& j, const InterruptLabel& l)
{
    // -1 is the "no error" sentinel used by annotation files.
    j = ojson{{"scenario_id", l.scenario_id},
              {"subset", to_string(l.subset)},
              {"t_error", l.t_error ? ojson(*l.t_error) : ojson(-1)}};
}

void from_json(const ojson& j, InterruptLabel& l)
{
    l.scenario_id = j.at("scenario_id").get<std::string>();
    std::optional<double> t = optional_number(j, "t_error");
    if (t && *t == -1.0) t.reset();
    if (t && *t < 0.0) throw ValidationError("label for '" + l.scenario_id + "': t_error must be >= 0 or -1");
    if (j.contains("subset")) {
        const auto s = j.at("subset").get<std::string>();
        if (s == "wrong") {
            if (!t) throw ValidationError("label for '" + l.scenario_id + "': wrong subset needs t_error");
            l.subset = Subset::Wrong;
        } else if (s == "correct") {
            if (t) throw ValidationError("label for '" + l.scenario_id + "': correct subset has no t_error");
            l.subset = Subset::Correct;
        } else {
            throw ValidationError("label for '" + l.scenario_id + "': unknown subset '" + s + "'");
        }
    } else {
        l.subset = t ? Subset::Wrong : Subset::Correct;
    }
    l.t_error = t;
}

void to_json(ojson& j, const ValueSpans& v)
{
    j = ojson::object();
    for (const auto& [arg, src] : v) {
        if (const auto* w = std::get_if<WordSpan>(&src))
            j[arg] = ojson::array({w->first, w->last});
        else
            j[arg] = "dependency";
    }
}

void from_json(const ojson& j, ValueSpans& v)
{
    v.clear();
    for (const auto& [arg, src] : j.items()) {
        if (src.is_string() && src.get<std::string>() == "dependency")
            v[arg] = FromDependency{};
        else if (src.is_array() && src.size() == 2)
            v[arg] = WordSpan{src.at(0).get<std::size_t>(), src.at(1).get<std::size_t>()};
        else
            throw ValidationError("value span for '" + arg + "' must be [first, last] or \"dependency\"");
    }
}

void to_json(ojson& j, const ResponseChunk& r)
{
    j = ojson{{"emit_time", r.emit_time}, {"tokens", r.tokens}};
}

void from_json(const ojson& j, ResponseChunk& r)
{
    r.emit_time = j.at("emit_time").get<double>();
    r.tokens = j.at("tokens").get<Tokens>();
}

ojson event_to_json(const TraceEvent& event)
{
    return std::visit(
        [](const auto& e) -> ojson {
            using T = std::decay_t<decltype(e)>;
            if constexpr (std::is_same_v<T, ChunkDelivered>) {
                return ojson{{"event", "chunk"}, {"time", e.time}, {"chunk", e.chunk}};
            } else if constexpr (std::is_same_v<T, ThinkingGenerated>) {
                ojson j{{"event", "thinking"}};
                j.update(ojson(e.chunk));
                return j;
            } else if constexpr (std::is_same_v<T, ToolExchange>) {
                return ojson{{"event", "tool"},       {"time", e.time},   {"thinking_index", e.thinking_index},
                             {"malformed", e.malformed}, {"call", e.call}, {"outcome", e.outcome}};
            } else if constexpr (std::is_same_v<T, ResponseEmitted>) {
                ojson j{{"event", "response"}};
                j.update(ojson(e.response));
                return j;
            } else {
                return ojson{{"event", "rebuild"}, {"time", e.time}};
            }
        },
        event);
}

TraceEvent event_from_json(const ojson& j)
{
    const auto kind = j.at("event").get<std::string>();
    if (kind == "chunk") return ChunkDelivered{j.at("time").get<double>(), j.at("chunk").get<SpeechChunk>()};
    if (kind == "thinking") return ThinkingGenerated{j.get<ThinkingChunk>()};
    if (kind == "tool") {
        ToolExchange e;
        e.time = j.at("time").get<double>();
        e.thinking_index = j.at("thinking_index").get<int>();
        e.malformed = j.at("malformed").get<bool>();
        e.call = j.at("call").get<ToolCall>();
        e.outcome = j.at("outcome").get<MatchOutcome>();
        return e;
    }
    if (kind == "response") return ResponseEmitted{j.get<ResponseChunk>()};
    if (kind == "rebuild") return ContextRebuilt{j.at("time").get<double>()};
    throw ValidationError("unknown trace event '" + kind + "'");
}

} // namespace shanks
