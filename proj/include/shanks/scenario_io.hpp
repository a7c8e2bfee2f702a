#pragma once

#include "shanks/backend.hpp"
#include "shanks/orchestrator.hpp"
#include "shanks/scenario.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shanks {

// Every file is line-delimited JSON; the first line is a typed header record.
// Parse errors are ValidationErrors of the form "<source>:<line>: <message>".

std::string serialize_scenario(const Scenario& scenario);
Scenario parse_scenario(std::string_view text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);

std::string serialize_script(const Script& script, const std::string& scenario_id);
Script parse_script(std::string_view text, const std::string& source = "<script>");
Script load_script(const std::filesystem::path& path);

/// One record per line: {"scenario_id","subset","t_error"}; t_error -1 means no error.
std::string serialize_labels(const std::vector<InterruptLabel>& labels);
std::vector<InterruptLabel> parse_labels(std::string_view text, const std::string& source = "<labels>");
std::vector<InterruptLabel> load_labels(const std::filesystem::path& path);

/// Bare ground-truth call records, one per line, no header.
std::vector<GroundTruthCall> parse_ground_truth(std::string_view text, const std::string& source = "<calls>");
std::vector<GroundTruthCall> load_ground_truth(const std::filesystem::path& path);

/// Header, one line per event, then a summary line.
std::string serialize_trace(const TurnTrace& trace);
TurnTrace parse_trace(std::string_view text, const std::string& source = "<trace>");
TurnTrace load_trace(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

struct SyntheticParams {
    Task task = Task::Interrupt;
    Mode mode = Mode::Shanks;        // which strategy the planted script drives
    ChunkingConfig chunking;
    double duration = 49.25;         // seconds
    int n_words = 0;                 // 0: about 2.5 words per second
    int n_calls = 3;                 // tool_call task
    int failed_calls = 0;            // planted calls issued with wrong arguments
    double dependency_prob = 0.3;
    std::optional<int> interrupt_chunk; // interrupt task: plant [INTERRUPT] in R_k
    std::optional<bool> wrong;          // interrupt task: force the label subset
    double overlong_prob = 0.0;         // chance a thinking step overruns the budget
};

/// Closed-form outcome the planted script must produce.
struct SyntheticExpectation {
    std::optional<int> interrupted_at;
    std::optional<double> t_interrupt;
    bool valid_interrupt = false;
    int early_hits = 0;
    int late_hits = 0;
    int total_gt = 0;
    bool success = false;
    std::int64_t post_turn_tokens = 0;
    int num_chunks = 0;
};

struct SyntheticCase {
    Scenario scenario;
    Script script;
    SyntheticExpectation expected;
};

/// Deterministic in (seed, params).
SyntheticCase generate_synthetic(std::uint64_t seed, const SyntheticParams& params);

} // namespace shanks
