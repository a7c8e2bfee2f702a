// Command-line driver: simulate turns, assemble training corpora, score traces.
//
// Exit codes: 0 success, 1 validation failure, 2 runtime abort.

#include "shanks/errors.hpp"
#include "shanks/json.hpp"
#include "shanks/metrics.hpp"
#include "shanks/orchestrator.hpp"
#include "shanks/remote.hpp"
#include "shanks/scenario_io.hpp"
#include "shanks/trainset.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;
using namespace shanks;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitAbort = 2;

struct RunConfig {
    std::string mode = "shanks";
    ChunkingConfig chunking;
    std::int64_t final_budget = -1; // negative: unbounded
    int iteration_cap = 16;
    bool include_preamble = true;
    std::string backend = "scripted";
    std::string scripts; // directory holding <id>.script.jsonl
    std::string judges = "default";
    std::string output_dir = ".";
    std::int64_t seed = 0;
    int jobs = 1;
};

void add_chunking(CLI::App* cmd, RunConfig& cfg)
{
    cmd->add_option("--t_chunk", cfg.chunking.t_chunk, "seconds of speech per chunk")->capture_default_str();
    cmd->add_option("--n_tps", cfg.chunking.n_tps, "model tokens per second")->capture_default_str();
    cmd->add_option("--max_context", cfg.chunking.max_context, "context window in tokens")->capture_default_str();
    cmd->add_option("--final_budget", cfg.final_budget, "thinking budget after end of audio (-1: unbounded)")
        ->capture_default_str();
}

ChunkingConfig chunking_of(const RunConfig& cfg)
{
    auto c = cfg.chunking;
    if (cfg.final_budget >= 0) c.final_budget = cfg.final_budget;
    return c;
}

RemoteConfig remote_from_env(const char* var)
{
    const char* url = std::getenv(var);
    if (!url || !*url) throw ValidationError(std::string(var) + " is not set");
    RemoteConfig rc;
    rc.url = url;
    rc.timeout = timeout_from_env(rc.timeout);
    return rc;
}

void require_choice(const std::string& value, std::initializer_list<const char*> allowed, const char* flag)
{
    for (const char* a : allowed)
        if (value == a) return;
    throw ValidationError(std::string("--") + flag + ": unexpected value '" + value + "'");
}

std::vector<fs::path> expand(const std::vector<std::string>& inputs, const std::string& suffix)
{
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(p)) {
                const auto name = e.path().filename().string();
                if (name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0)
                    found.push_back(e.path());
            }
            std::sort(found.begin(), found.end());
            out.insert(out.end(), found.begin(), found.end());
        } else {
            out.push_back(p);
        }
    }
    return out;
}

bool ends_with(const std::string& s, const std::string& suffix)
{
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// simulate --------------------------------------------------------------

int cmd_simulate(const RunConfig& cfg, const std::vector<std::string>& inputs)
{
    require_choice(cfg.mode, {"shanks", "call-after-listen", "combined"}, "mode");
    require_choice(cfg.backend, {"scripted", "remote"}, "backend");
    require_choice(cfg.judges, {"default", "remote"}, "judges");
    if (cfg.jobs < 1) throw ValidationError("--jobs must be at least 1");

    const Mode mode = mode_from_string(cfg.mode);
    SessionConfig session;
    session.chunking = chunking_of(cfg);
    session.iteration_cap = cfg.iteration_cap;
    session.include_preamble = cfg.include_preamble;
    validate(session.chunking);

    std::optional<RemoteConfig> backend_remote, judge_remote;
    if (cfg.backend == "remote") backend_remote = remote_from_env("SHANKS_BACKEND_URL");
    if (cfg.judges == "remote") judge_remote = remote_from_env("SHANKS_JUDGE_URL");
    if (cfg.backend == "scripted" && cfg.scripts.empty()) throw ValidationError("--scripts is required for the scripted backend");

    // Load everything up front so bad inputs fail before any trace is written.
    struct Job {
        Scenario scenario;
        Script script;
    };
    std::vector<Job> jobs;
    for (const auto& path : expand(inputs, ".scenario.jsonl")) {
        Job job{load_scenario(path), {}};
        if (cfg.backend == "scripted") job.script = load_script(fs::path(cfg.scripts) / (job.scenario.id + ".script.jsonl"));
        jobs.push_back(std::move(job));
    }
    fs::create_directories(cfg.output_dir);

    std::shared_ptr<const CallMatcher> matcher;
    if (judge_remote) matcher = std::make_shared<RemoteCallMatcher>(*judge_remote);

    std::atomic<std::size_t> next{0};
    std::atomic<bool> all_completed{true};
    std::mutex log_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            std::unique_ptr<Backend> backend;
            if (backend_remote) backend = std::make_unique<RemoteBackend>(*backend_remote);
            else backend = std::make_unique<ScriptedBackend>(job.script, session.chunking.max_context);
            auto env = make_environment(job.scenario, matcher);
            const auto trace = run(mode, job.scenario, *backend, env, session);
            write_file_atomic(fs::path(cfg.output_dir) / (job.scenario.id + ".trace.jsonl"), serialize_trace(trace));
            if (trace.status != TraceStatus::Completed) {
                all_completed = false;
                std::lock_guard lock(log_mu);
                std::cerr << job.scenario.id << ": " << to_string(trace.status) << ": " << trace.error << "\n";
            }
        }
    };
    const int n = std::min<int>(cfg.jobs, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return all_completed ? kExitOk : kExitAbort;
}

// assemble-train --------------------------------------------------------

int cmd_assemble(const RunConfig& cfg, const std::string& input, const std::string& output)
{
    const auto chunking = chunking_of(cfg);
    validate(chunking);
    const auto tuples = parse_tuples(read_file(input), input);
    std::vector<TrainSequence> corpus;
    bool ok = true;
    for (const auto& t : tuples) {
        auto seq = assemble_tuple(t, chunking);
        for (const auto& d : validate_sequence(seq)) {
            std::cerr << input << ": " << t.id << ": " << d << "\n";
            ok = false;
        }
        corpus.push_back(std::move(seq));
    }
    if (!ok) return kExitInvalid;
    write_file_atomic(output, serialize_corpus(corpus));
    return kExitOk;
}

// score -----------------------------------------------------------------

int cmd_score(const RunConfig& cfg, const std::vector<std::string>& trace_inputs,
              const std::vector<std::string>& scenario_inputs, const std::string& labels_path,
              const std::string& output)
{
    require_choice(cfg.judges, {"default", "remote"}, "judges");
    std::map<std::string, Scenario> scenarios;
    for (const auto& p : expand(scenario_inputs, ".scenario.jsonl")) {
        auto s = load_scenario(p);
        const auto id = s.id;
        if (!scenarios.emplace(id, std::move(s)).second) throw ValidationError(p.string() + ": duplicate scenario id '" + id + "'");
    }
    std::vector<TurnTrace> interrupt_traces, tool_traces;
    for (const auto& p : expand(trace_inputs, ".trace.jsonl")) {
        auto t = load_trace(p);
        auto it = scenarios.find(t.scenario_id);
        if (it == scenarios.end()) throw ValidationError(p.string() + ": no scenario with id '" + t.scenario_id + "'");
        (it->second.task == Task::Interrupt ? interrupt_traces : tool_traces).push_back(std::move(t));
    }

    InterruptJudge interrupt_judge = default_interrupt_judge;
    QualityJudge quality_judge = default_quality_judge;
    if (cfg.judges == "remote") {
        const auto rc = remote_from_env("SHANKS_JUDGE_URL");
        interrupt_judge = remote_interrupt_judge(rc);
        quality_judge = remote_quality_judge(rc);
    }

    Report report;
    if (!interrupt_traces.empty()) {
        std::vector<InterruptLabel> labels;
        if (!labels_path.empty()) {
            labels = load_labels(labels_path);
        } else {
            for (const auto& [id, s] : scenarios)
                if (s.label) labels.push_back(*s.label);
        }
        report.interrupt = interrupt_report(interrupt_traces, labels, interrupt_judge);
    }
    if (!tool_traces.empty()) {
        std::vector<Scenario> list;
        for (const auto& [id, s] : scenarios)
            if (s.task == Task::ToolCall) list.push_back(s);
        report.tool = tool_report(tool_traces, list, quality_judge);
    }
    if (!output.empty()) write_file_atomic(output, serialize_report(report));
    std::cout << render_table(report, cfg.mode);
    return kExitOk;
}

// report ----------------------------------------------------------------

int cmd_report(const std::vector<std::string>& inputs)
{
    bool first = true;
    for (const auto& in : inputs) {
        const fs::path p(in);
        auto label = p.filename().string();
        if (ends_with(label, ".report.json")) label.resize(label.size() - std::string(".report.json").size());
        if (!first) std::cout << "\n";
        first = false;
        std::cout << render_table(parse_report(read_file(p), p.string()), label);
    }
    return kExitOk;
}

// validate --------------------------------------------------------------

int cmd_validate(const std::vector<std::string>& inputs)
{
    bool ok = true;
    for (const auto& in : inputs) {
        const std::string name = fs::path(in).filename().string();
        try {
            if (ends_with(name, ".scenario.jsonl")) {
                load_scenario(in);
            } else if (ends_with(name, ".script.jsonl")) {
                load_script(in);
            } else if (ends_with(name, ".trace.jsonl")) {
                load_trace(in);
            } else if (ends_with(name, ".train.jsonl")) {
                for (const auto& d : validate_corpus(read_file(in))) {
                    std::cerr << in << ":" << d.line << ": " << d.id << ": " << d.message << "\n";
                    ok = false;
                }
                continue;
            } else if (ends_with(name, ".report.json")) {
                parse_report(read_file(in), in);
            } else if (ends_with(name, ".labels.jsonl")) {
                load_labels(in);
            } else {
                std::cerr << in << ": unknown file kind\n";
                ok = false;
                continue;
            }
        } catch (const Error& e) {
            std::cerr << e.what() << "\n";
            ok = false;
            continue;
        }
    }
    return ok ? kExitOk : kExitInvalid;
}

// generate --------------------------------------------------------------

ojson expectation_json(const SyntheticExpectation& e)
{
    return ojson{{"interrupted_at", e.interrupted_at ? ojson(*e.interrupted_at) : ojson(nullptr)},
                 {"t_interrupt", e.t_interrupt ? ojson(*e.t_interrupt) : ojson(nullptr)},
                 {"valid_interrupt", e.valid_interrupt},
                 {"early_hits", e.early_hits},
                 {"late_hits", e.late_hits},
                 {"total_gt", e.total_gt},
                 {"success", e.success},
                 {"post_turn_tokens", e.post_turn_tokens},
                 {"num_chunks", e.num_chunks}};
}

int cmd_generate(const RunConfig& cfg, const std::string& task, int count, SyntheticParams params)
{
    require_choice(cfg.mode, {"shanks", "call-after-listen", "combined"}, "mode");
    params.task = task_from_string(task);
    params.mode = mode_from_string(cfg.mode);
    params.chunking = chunking_of(cfg);
    validate(params.chunking);
    if (count < 0) throw ValidationError("--count must be non-negative");
    fs::create_directories(cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    for (int i = 0; i < count; ++i) {
        const auto c = generate_synthetic(static_cast<std::uint64_t>(cfg.seed) + static_cast<std::uint64_t>(i), params);
        write_file_atomic(dir / (c.scenario.id + ".scenario.jsonl"), serialize_scenario(c.scenario));
        write_file_atomic(dir / (c.scenario.id + ".script.jsonl"), serialize_script(c.script, c.scenario.id));
        write_file_atomic(dir / (c.scenario.id + ".expected.json"), expectation_json(c.expected).dump(2) + "\n");
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Think-while-listening turn simulator and scorer"};
    app.set_config("--config", "", "TOML/INI file supplying any flag");
    app.require_subcommand(1);

    RunConfig cfg;

    auto* sim = app.add_subcommand("simulate", "run scenarios and write one trace per scenario");
    std::vector<std::string> sim_inputs;
    sim->add_option("scenarios", sim_inputs, "scenario files or directories")->required();
    sim->add_option("--mode", cfg.mode, "shanks | call-after-listen | combined")->capture_default_str();
    add_chunking(sim, cfg);
    sim->add_option("--iteration_cap", cfg.iteration_cap, "generate calls allowed after end of audio")->capture_default_str();
    sim->add_option("--include_preamble", cfg.include_preamble)->capture_default_str();
    sim->add_option("--backend", cfg.backend, "scripted | remote (URL from SHANKS_BACKEND_URL)")->capture_default_str();
    sim->add_option("--scripts", cfg.scripts, "directory with <id>.script.jsonl files");
    sim->add_option("--judges", cfg.judges, "default | remote (URL from SHANKS_JUDGE_URL)")->capture_default_str();
    sim->add_option("--output_dir", cfg.output_dir)->capture_default_str();
    sim->add_option("--seed", cfg.seed, "unused by scripted runs; recorded for manifests");
    sim->add_option("--jobs", cfg.jobs, "parallel sessions")->capture_default_str();

    auto* asmb = app.add_subcommand("assemble-train", "turn tuple records into a masked training corpus");
    std::string asm_input, asm_output;
    asmb->add_option("input", asm_input, "tuple JSONL file")->required();
    asmb->add_option("-o,--output", asm_output, "corpus file (.train.jsonl)")->required();
    add_chunking(asmb, cfg);

    auto* score = app.add_subcommand("score", "compute metrics over traces");
    std::vector<std::string> score_traces, score_scenarios;
    std::string labels_path, report_out;
    score->add_option("--traces", score_traces, "trace files or directories")->required();
    score->add_option("--scenarios", score_scenarios, "scenario files or directories")->required();
    score->add_option("--labels", labels_path, "interrupt labels file (default: labels embedded in scenarios)");
    score->add_option("--judges", cfg.judges, "default | remote (URL from SHANKS_JUDGE_URL)")->capture_default_str();
    score->add_option("--mode", cfg.mode, "row label in the printed table")->capture_default_str();
    score->add_option("-o,--output", report_out, "report file (.report.json)");

    auto* rep = app.add_subcommand("report", "print report files as tables");
    std::vector<std::string> rep_inputs;
    rep->add_option("reports", rep_inputs)->required();

    auto* val = app.add_subcommand("validate", "check files by their suffix");
    std::vector<std::string> val_inputs;
    val->add_option("files", val_inputs)->required();

    auto* gen = app.add_subcommand("generate", "write a seeded synthetic suite with its answer key");
    std::string gen_task = "interrupt";
    int gen_count = 10;
    SyntheticParams params;
    int interrupt_chunk = 0;
    gen->add_option("--task", gen_task, "interrupt | tool_call")->capture_default_str();
    gen->add_option("--count", gen_count)->capture_default_str();
    gen->add_option("--mode", cfg.mode, "strategy the planted scripts drive")->capture_default_str();
    gen->add_option("--seed", cfg.seed)->capture_default_str();
    gen->add_option("--output_dir", cfg.output_dir)->capture_default_str();
    gen->add_option("--duration", params.duration)->capture_default_str();
    gen->add_option("--n_calls", params.n_calls)->capture_default_str();
    gen->add_option("--failed_calls", params.failed_calls)->capture_default_str();
    gen->add_option("--interrupt_chunk", interrupt_chunk, "plant the interrupt in this chunk (0: random)");
    add_chunking(gen, cfg);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*sim) return cmd_simulate(cfg, sim_inputs);
        if (*asmb) return cmd_assemble(cfg, asm_input, asm_output);
        if (*score) return cmd_score(cfg, score_traces, score_scenarios, labels_path, report_out);
        if (*rep) return cmd_report(rep_inputs);
        if (*val) return cmd_validate(val_inputs);
        if (*gen) {
            if (interrupt_chunk > 0) params.interrupt_chunk = interrupt_chunk;
            return cmd_generate(cfg, gen_task, gen_count, params);
        }
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const AnnotationError& e) {
        std::cerr << "annotation error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitAbort;
    }
    return kExitInvalid;
}
