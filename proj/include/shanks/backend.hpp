#pragma once

#include "shanks/tokens.hpp"

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shanks {

struct GenerationRequest {
    Tokens context;
    std::int64_t max_tokens = 0;
    std::vector<std::string> stop_markers;
};

enum class FinishReason { Stopped, BudgetExhausted, EndOfSequence };

struct GenerationResult {
    Tokens tokens;
    FinishReason finish = FinishReason::EndOfSequence;

    friend bool operator==(const GenerationResult&, const GenerationResult&) = default;
};

std::string to_string(FinishReason f);
FinishReason finish_from_string(const std::string& s);

/// Token generator. Implementations must accept concurrent calls from
/// different sessions; a session itself never has two calls in flight.
class Backend {
public:
    virtual ~Backend() = default;
    virtual GenerationResult generate(const GenerationRequest& request) = 0;
};

struct ScriptEntry {
    int step = 1;
    Tokens tokens;

    friend bool operator==(const ScriptEntry&, const ScriptEntry&) = default;
};

using Script = std::vector<ScriptEntry>;

/// Throws ValidationError unless steps are unique and contiguous from 1.
void validate_script(std::span<const ScriptEntry> script);

/// Tokens for `step`, or empty when the script has no such step.
Tokens scripted_lookup(std::span<const ScriptEntry> script, int step);

/// Applies stop/budget rules to a raw continuation: cut after the first stop
/// marker (Stopped), else at max_tokens (BudgetExhausted), else EndOfSequence.
GenerationResult shape_continuation(const Tokens& raw, std::int64_t max_tokens,
                                    std::span<const std::string> stop_markers);

/// Replays a script, one entry per generate() call, in call order.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(Script script, std::optional<std::int64_t> max_context = std::nullopt);

    GenerationResult generate(const GenerationRequest& request) override;

    /// Number of generate() calls served so far.
    int steps_served() const;
    void reset();

private:
    std::map<int, Tokens> by_step_;
    std::optional<std::int64_t> max_context_;
    mutable std::mutex mu_;
    int next_step_ = 1;
};

struct RemoteConfig {
    std::string url;   // e.g. http://127.0.0.1:8080/generate
    std::chrono::milliseconds timeout{30000};
};

/// Minimal HTTP + JSON transport shared by the remote backend and remote judges.
class JsonTransport {
public:
    explicit JsonTransport(RemoteConfig config);

    /// POSTs `body` (a JSON document) and returns the parsed JSON response text.
    /// HTTP 413 raises ContextOverflowError; connection failures, timeouts and 5xx
    /// are retriable TransportErrors; other failures are non-retriable.
    std::string post(const std::string& body) const;

    const RemoteConfig& config() const { return config_; }

private:
    RemoteConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

/// Talks to a model server: {"context","max_tokens","stop"} -> {"tokens","finish"}.
class RemoteBackend final : public Backend {
public:
    explicit RemoteBackend(RemoteConfig config);
    GenerationResult generate(const GenerationRequest& request) override;

private:
    JsonTransport transport_;
};

/// Reads SHANKS_TIMEOUT_MS when set.
std::chrono::milliseconds timeout_from_env(std::chrono::milliseconds fallback);

} // namespace shanks
