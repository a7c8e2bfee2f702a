#include "shanks/backend.hpp"

#include "shanks/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <set>

namespace shanks {

std::string to_string(FinishReason f)
{
    switch (f) {
    case FinishReason::Stopped: return "stopped";
    case FinishReason::BudgetExhausted: return "budget";
    case FinishReason::EndOfSequence: return "eos";
    }
    return "eos";
}

FinishReason finish_from_string(const std::string& s)
{
    if (s == "stopped") return FinishReason::Stopped;
    if (s == "budget") return FinishReason::BudgetExhausted;
    if (s == "eos") return FinishReason::EndOfSequence;
    throw ValidationError("unknown finish reason '" + s + "'");
}

void validate_script(std::span<const ScriptEntry> script)
{
    std::set<int> steps;
    for (const auto& e : script) {
        if (e.step < 1) throw ValidationError("script step " + std::to_string(e.step) + " must be >= 1");
        if (!steps.insert(e.step).second)
            throw ValidationError("script step " + std::to_string(e.step) + " appears twice");
    }
    if (!steps.empty() && *steps.rbegin() != static_cast<int>(steps.size()))
        throw ValidationError("script steps must be contiguous from 1");
}

Tokens scripted_lookup(std::span<const ScriptEntry> script, int step)
{
    for (const auto& e : script)
        if (e.step == step) return e.tokens;
    return {};
}

GenerationResult shape_continuation(const Tokens& raw, std::int64_t max_tokens,
                                    std::span<const std::string> stop_markers)
{
    GenerationResult out;
    const auto limit = static_cast<std::size_t>(std::max<std::int64_t>(max_tokens, 0));
    for (const auto& tok : raw) {
        if (out.tokens.size() >= limit) {
            out.finish = FinishReason::BudgetExhausted;
            return out;
        }
        out.tokens.push_back(tok);
        if (std::find(stop_markers.begin(), stop_markers.end(), tok) != stop_markers.end()) {
            out.finish = FinishReason::Stopped;
            return out;
        }
    }
    // A zero budget always reports exhaustion, even for an empty continuation.
    out.finish = limit == 0 ? FinishReason::BudgetExhausted : FinishReason::EndOfSequence;
    return out;
}

ScriptedBackend::ScriptedBackend(Script script, std::optional<std::int64_t> max_context)
    : max_context_(max_context)
{
    validate_script(script);
    for (auto& e : script) by_step_.emplace(e.step, std::move(e.tokens));
}

GenerationResult ScriptedBackend::generate(const GenerationRequest& request)
{
    if (request.max_tokens < 0) throw ValidationError("max_tokens must be non-negative");
    if (max_context_ && static_cast<std::int64_t>(request.context.size()) > *max_context_)
        throw ContextOverflowError("context of " + std::to_string(request.context.size()) +
                                   " tokens exceeds " + std::to_string(*max_context_));
    int step = 0;
    {
        std::lock_guard lock(mu_);
        step = next_step_++;
    }
    auto it = by_step_.find(step);
    static const Tokens kEmpty;
    return shape_continuation(it == by_step_.end() ? kEmpty : it->second, request.max_tokens,
                              request.stop_markers);
}

int ScriptedBackend::steps_served() const
{
    std::lock_guard lock(mu_);
    return next_step_ - 1;
}

void ScriptedBackend::reset()
{
    std::lock_guard lock(mu_);
    next_step_ = 1;
}

JsonTransport::JsonTransport(RemoteConfig config) : config_(std::move(config))
{
    const auto scheme = config_.url.find("://");
    if (scheme == std::string::npos) throw ValidationError("remote URL needs a scheme: " + config_.url);
    const auto slash = config_.url.find('/', scheme + 3);
    scheme_host_port_ = config_.url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.url.substr(slash);
}

std::string JsonTransport::post(const std::string& body) const
{
    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    auto res = client.Post(path_, body, "application/json");
    if (!res)
        throw TransportError("request to " + config_.url + " failed: " + httplib::to_string(res.error()), true);
    if (res->status == 413) throw ContextOverflowError("remote rejected context as too long");
    if (res->status >= 500)
        throw TransportError("remote returned HTTP " + std::to_string(res->status), true);
    if (res->status != 200)
        throw TransportError("remote returned HTTP " + std::to_string(res->status), false);
    return res->body;
}

RemoteBackend::RemoteBackend(RemoteConfig config) : transport_(std::move(config)) {}

GenerationResult RemoteBackend::generate(const GenerationRequest& request)
{
    if (request.max_tokens < 0) throw ValidationError("max_tokens must be non-negative");
    nlohmann::ordered_json body;
    body["context"] = request.context;
    body["max_tokens"] = request.max_tokens;
    body["stop"] = request.stop_markers;

    const auto text = transport_.post(body.dump());
    Tokens raw;
    FinishReason reported = FinishReason::EndOfSequence;
    try {
        const auto doc = nlohmann::json::parse(text);
        raw = doc.at("tokens").get<Tokens>();
        reported = finish_from_string(doc.at("finish").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed remote response: ") + e.what(), false);
    } catch (const ValidationError& e) {
        throw TransportError(std::string("malformed remote response: ") + e.what(), false);
    }
    // Enforce the request contract locally; servers may overshoot either limit.
    auto out = shape_continuation(raw, request.max_tokens, request.stop_markers);
    if (out.finish == FinishReason::EndOfSequence && reported == FinishReason::BudgetExhausted)
        out.finish = FinishReason::BudgetExhausted;
    return out;
}

std::chrono::milliseconds timeout_from_env(std::chrono::milliseconds fallback)
{
    if (const char* v = std::getenv("SHANKS_TIMEOUT_MS")) {
        char* end = nullptr;
        const long long ms = std::strtoll(v, &end, 10);
        if (end != v && ms > 0) return std::chrono::milliseconds(ms);
    }
    return fallback;
}

} // namespace shanks
