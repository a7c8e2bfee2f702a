#include "shanks/tool_runtime.hpp"

#include "shanks/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <queue>

namespace shanks {

using nlohmann::json;

ParsedCalls parse_tool_calls(std::span<const Token> tokens)
{
    ParsedCalls out;
    std::size_t i = 0;
    while (i < tokens.size()) {
        if (tokens[i] != marker::kToolCallOpen) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < tokens.size() && tokens[j] != marker::kToolCallClose && tokens[j] != marker::kToolCallOpen) ++j;
        if (j == tokens.size() || tokens[j] == marker::kToolCallOpen) {
            out.malformed.push_back({i, "tool call is missing its close marker"});
            i = j;
            continue;
        }
        Tokens inner(tokens.begin() + static_cast<std::ptrdiff_t>(i + 1), tokens.begin() + static_cast<std::ptrdiff_t>(j));
        const auto doc = json::parse(detokenize(inner), nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) {
            out.malformed.push_back({i, "tool call body is not a JSON object"});
        } else if (!doc.contains("name") || !doc["name"].is_string()) {
            out.malformed.push_back({i, "tool call has no string \"name\""});
        } else if (doc.contains("arguments") && !doc["arguments"].is_object()) {
            out.malformed.push_back({i, "tool call \"arguments\" is not an object"});
        } else {
            ToolCall call;
            call.name = doc["name"].get<std::string>();
            call.arguments = doc.value("arguments", json::object());
            call.raw_span = {i, j + 1};
            out.calls.push_back(std::move(call));
        }
        i = j + 1;
    }
    return out;
}

Tokens render_tool_call(const std::string& name, const json& arguments)
{
    json body;
    body["name"] = name;
    body["arguments"] = arguments;
    Tokens out{std::string(marker::kToolCallOpen)};
    for (auto& t : tokenize(body.dump())) out.push_back(std::move(t));
    out.emplace_back(marker::kToolCallClose);
    return out;
}

namespace {

std::string trim(const std::string& s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool is_numeric_type(const std::string& type)
{
    return type == "number" || type == "integer" || type == "int" || type == "float" || type == "double";
}

std::optional<double> parse_number(const std::string& s)
{
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

json canonical_value(const json& v, bool numeric)
{
    if (v.is_string()) {
        auto s = trim(v.get<std::string>());
        if (numeric)
            if (auto n = parse_number(s)) return json(*n);
        return json(std::move(s));
    }
    if (v.is_number()) return json(v.get<double>());
    if (v.is_object()) {
        json out = json::object();
        for (const auto& [k, x] : v.items()) out[trim(k)] = canonical_value(x, false);
        return out;
    }
    if (v.is_array()) {
        json out = json::array();
        for (const auto& x : v) out.push_back(canonical_value(x, numeric));
        return out;
    }
    return v;
}

const ToolSpec* find_spec(std::span<const ToolSpec> specs, const std::string& name)
{
    for (const auto& s : specs)
        if (s.name == name) return &s;
    return nullptr;
}

} // namespace

json canonicalize_arguments(const json& arguments, const ToolSpec* spec)
{
    if (!arguments.is_object()) return canonical_value(arguments, false);
    json out = json::object();
    for (const auto& [key, value] : arguments.items()) {
        const auto k = trim(key);
        bool numeric = false;
        if (spec) {
            auto it = spec->parameters.find(k);
            numeric = it != spec->parameters.end() && is_numeric_type(it->second.type);
        }
        out[k] = canonical_value(value, numeric);
    }
    return out;
}

bool StructuralMatcher::matches(const ToolCall& call, const GroundTruthCall& truth,
                                std::span<const ToolSpec> specs) const
{
    if (trim(call.name) != trim(truth.name)) return false;
    const auto* spec = find_spec(specs, truth.name);
    return canonicalize_arguments(call.arguments, spec) == canonicalize_arguments(truth.arguments, spec);
}

ToolEnvironment::ToolEnvironment(std::vector<ToolSpec> specs, std::vector<GroundTruthCall> ground_truth,
                                 std::shared_ptr<const CallMatcher> matcher)
    : specs_(std::move(specs)), ground_truth_(std::move(ground_truth)), matcher_(std::move(matcher))
{
    std::sort(ground_truth_.begin(), ground_truth_.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < ground_truth_.size(); ++i)
        if (ground_truth_[i].id == ground_truth_[i - 1].id)
            throw ValidationError("duplicate ground-truth call id " + std::to_string(ground_truth_[i].id));
    if (!matcher_) matcher_ = std::make_shared<StructuralMatcher>();
}

const GroundTruthCall* ToolEnvironment::find(int id) const
{
    auto it = std::lower_bound(ground_truth_.begin(), ground_truth_.end(), id,
                               [](const GroundTruthCall& c, int v) { return c.id < v; });
    return it != ground_truth_.end() && it->id == id ? &*it : nullptr;
}

MatchOutcome ToolEnvironment::match(const ToolCall& call, double now, double eoa_time)
{
    MatchOutcome out;
    out.phase = now < eoa_time ? CallPhase::Early : CallPhase::Late;
    const GroundTruthCall* cached = nullptr;
    for (const auto& truth : ground_truth_) {
        if (!matcher_->matches(call, truth, specs_)) continue;
        if (!consumed_.contains(truth.id)) {
            consumed_.insert(truth.id);
            out.matched = truth.id;
            out.response_payload = truth.response;
            return out;
        }
        if (!cached) cached = &truth;
    }
    if (cached) {
        out.matched = cached->id;
        out.response_payload = cached->response;
        out.replay = true;
        return out;
    }
    out.is_error = true;
    out.response_payload = std::string(kGenericToolError);
    return out;
}

MatchOutcome match_call(const ToolCall& call, ToolEnvironment& env, double now, double eoa_time)
{
    return env.match(call, now, eoa_time);
}

namespace {

bool reaches(const std::vector<GroundTruthCall>& calls, int from, int target, std::set<int>& seen)
{
    const auto it = std::find_if(calls.begin(), calls.end(), [&](const auto& c) { return c.id == from; });
    if (it == calls.end()) return false;
    for (int dep : it->depends_on) {
        if (dep == target) return true;
        if (seen.insert(dep).second && reaches(calls, dep, target, seen)) return true;
    }
    return false;
}

} // namespace

double earliest_call_time(const GroundTruthCall& truth, std::span<const WordTiming> words,
                          const ValueSpans& value_spans, const ToolEnvironment& env)
{
    std::set<int> seen;
    if (truth.depends_on.contains(truth.id) || reaches(env.ground_truth(), truth.id, truth.id, seen))
        throw ValidationError("call " + std::to_string(truth.id) + " depends on itself");

    double t = 0.0;
    if (truth.arguments.is_object()) {
        for (const auto& [arg, value] : truth.arguments.items()) {
            (void)value;
            auto it = value_spans.find(arg);
            if (it == value_spans.end())
                throw AnnotationError("call " + std::to_string(truth.id) + ": argument '" + arg +
                                      "' has no value span");
            if (const auto* span = std::get_if<WordSpan>(&it->second)) {
                if (span->first > span->last || span->last >= words.size())
                    throw AnnotationError("call " + std::to_string(truth.id) + ": argument '" + arg +
                                          "' span is out of range");
                t = std::max(t, words[span->last].end);
            }
        }
    }
    for (int dep : truth.depends_on) {
        const auto* parent = env.find(dep);
        if (!parent)
            throw ValidationError("call " + std::to_string(truth.id) + " depends on unknown call " +
                                  std::to_string(dep));
        if (!parent->earliest_time)
            throw AnnotationError("call " + std::to_string(truth.id) + ": dependency " + std::to_string(dep) +
                                  " has no earliest time yet");
        t = std::max(t, *parent->earliest_time);
    }
    return t;
}

std::vector<int> topological_order(std::span<const GroundTruthCall> calls)
{
    std::map<int, std::size_t> indegree;
    std::map<int, std::vector<int>> children;
    for (const auto& c : calls) indegree.emplace(c.id, 0);
    for (const auto& c : calls) {
        for (int dep : c.depends_on) {
            if (!indegree.contains(dep))
                throw ValidationError("call " + std::to_string(c.id) + " depends on unknown call " +
                                      std::to_string(dep));
            ++indegree[c.id];
            children[dep].push_back(c.id);
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (const auto& [id, d] : indegree)
        if (d == 0) ready.push(id);
    std::vector<int> order;
    while (!ready.empty()) {
        const int id = ready.top();
        ready.pop();
        order.push_back(id);
        for (int child : children[id])
            if (--indegree[child] == 0) ready.push(child);
    }
    if (order.size() != indegree.size()) throw ValidationError("ground-truth call dependencies contain a cycle");
    return order;
}

std::vector<GroundTruthCall> assign_earliest_times(std::vector<GroundTruthCall> calls,
                                                   std::span<const WordTiming> words,
                                                   const std::map<int, ValueSpans>& annotations)
{
    const auto order = topological_order(calls);
    for (auto& c : calls) c.earliest_time.reset();
    for (int id : order) {
        ToolEnvironment env({}, calls);
        const auto* truth = env.find(id);
        auto it = annotations.find(id);
        static const ValueSpans kNone;
        const double t = earliest_call_time(*truth, words, it == annotations.end() ? kNone : it->second, env);
        for (auto& c : calls)
            if (c.id == id) c.earliest_time = t;
    }
    return calls;
}

ChunkAssignment assign_to_chunks(std::span<const GroundTruthCall> calls, const ChunkingConfig& config,
                                 int num_chunks)
{
    validate(config);
    ChunkAssignment out;
    int last = num_chunks;
    for (int id : topological_order(calls)) {
        const auto it = std::find_if(calls.begin(), calls.end(), [&](const auto& c) { return c.id == id; });
        if (!it->earliest_time)
            throw AnnotationError("call " + std::to_string(id) + " has no earliest time");
        const int chunk = chunk_index_for(*it->earliest_time, config.t_chunk);
        out.calls_by_chunk[chunk].push_back(id);
        last = std::max(last, chunk);
    }
    for (int i = 1; i <= last; ++i)
        if (!out.calls_by_chunk.contains(i)) out.empty_chunks.push_back(i);
    return out;
}

ThinkingChunk inject_tool_response(const ThinkingChunk& thinking, const ToolCall& call,
                                   const MatchOutcome& outcome)
{
    if (call.raw_span.begin >= call.raw_span.end || call.raw_span.end > thinking.tokens.size())
        throw InternalError("tool call span lies outside its thinking chunk");
    const auto payload = tokenize(outcome.response_payload);
    ThinkingChunk out = thinking;
    const auto at = call.raw_span.end;
    out.tokens.insert(out.tokens.begin() + static_cast<std::ptrdiff_t>(at), payload.begin(), payload.end());
    for (auto& s : out.splices)
        if (s.offset >= at) s.offset += payload.size();
    // An empty payload still leaves a zero-length splice point.
    out.splices.push_back({at, payload.size()});
    std::stable_sort(out.splices.begin(), out.splices.end(),
                     [](const Splice& a, const Splice& b) { return a.offset < b.offset; });
    out.injected_tool_tokens += payload.size();
    out.contains_interrupt = contains(out.tokens, marker::kInterrupt);
    return out;
}

} // namespace shanks
