#include "shanks/remote.hpp"

#include "shanks/errors.hpp"
#include "shanks/json.hpp"

#include <memory>

namespace shanks {

namespace {

ojson post_json(const JsonTransport& transport, const ojson& body)
{
    const auto text = transport.post(body.dump());
    try {
        return ojson::parse(text);
    } catch (const ojson::exception& e) {
        throw TransportError(std::string("malformed judge response: ") + e.what(), false);
    }
}

template <typename T>
T field(const ojson& doc, const char* key)
{
    try {
        return doc.at(key).get<T>();
    } catch (const ojson::exception& e) {
        throw TransportError(std::string("malformed judge response: ") + e.what(), false);
    }
}

int score(const ojson& doc, const char* key)
{
    const int v = field<int>(doc, key);
    if (v < 0 || v > 2) throw TransportError(std::string("judge ") + key + " out of range", false);
    return v;
}

} // namespace

RemoteCallMatcher::RemoteCallMatcher(RemoteConfig config) : transport_(std::move(config)) {}

bool RemoteCallMatcher::matches(const ToolCall& call, const GroundTruthCall& truth,
                                std::span<const ToolSpec> specs) const
{
    ojson body;
    body["call"] = call;
    body["truth"] = truth;
    body["specs"] = ojson::array();
    for (const auto& s : specs) body["specs"].push_back(s);
    return field<bool>(post_json(transport_, body), "match");
}

InterruptJudge remote_interrupt_judge(RemoteConfig config)
{
    auto transport = std::make_shared<JsonTransport>(std::move(config));
    return [transport](const Tokens& prefix, const Tokens& response) {
        ojson body{{"user_prefix", detokenize(prefix)}, {"response", detokenize(response)}};
        return field<bool>(post_json(*transport, body), "valid");
    };
}

QualityJudge remote_quality_judge(RemoteConfig config)
{
    auto transport = std::make_shared<JsonTransport>(std::move(config));
    return [transport](const Scenario& scenario, const TurnTrace& trace) {
        Tokens query;
        for (const auto& w : scenario.words) query.push_back(w.text);
        const auto* response = trace.response();
        ojson body{{"scenario_id", scenario.id},
                   {"query", detokenize(query)},
                   {"ground_truth", scenario.ground_truth_calls},
                   {"response", response ? detokenize(response->tokens) : std::string()}};
        const auto doc = post_json(*transport, body);
        return QualityScores{score(doc, "correctness"), score(doc, "completeness")};
    };
}

} // namespace shanks
