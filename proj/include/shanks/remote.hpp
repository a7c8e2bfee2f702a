#pragma once

// Adapters that hand judging decisions to an external service over the same
// JSON transport the remote backend uses.

#include "shanks/backend.hpp"
#include "shanks/metrics.hpp"
#include "shanks/tool_runtime.hpp"

namespace shanks {

/// POSTs {"call","truth","specs"} and expects {"match": bool}.
class RemoteCallMatcher final : public CallMatcher {
public:
    explicit RemoteCallMatcher(RemoteConfig config);
    bool matches(const ToolCall& call, const GroundTruthCall& truth,
                 std::span<const ToolSpec> specs) const override;

private:
    JsonTransport transport_;
};

/// POSTs {"user_prefix","response"} and expects {"valid": bool}.
InterruptJudge remote_interrupt_judge(RemoteConfig config);

/// POSTs {"scenario_id","query","ground_truth","response"} and expects
/// {"correctness": 0..2, "completeness": 0..2}.
QualityJudge remote_quality_judge(RemoteConfig config);

} // namespace shanks
