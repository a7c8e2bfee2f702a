#include "shanks/scenario_io.hpp"

#include "shanks/errors.hpp"
#include "shanks/json.hpp"
#include "shanks/trainset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace shanks {

namespace {

struct Line {
    std::size_t number;
    std::string_view text;
};

std::vector<Line> split_lines(std::string_view text)
{
    std::vector<Line> out;
    std::size_t number = 0;
    while (!text.empty()) {
        ++number;
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) out.push_back({number, line});
        if (nl == std::string_view::npos) break;
        text.remove_prefix(nl + 1);
    }
    return out;
}

[[noreturn]] void fail(const std::string& source, std::size_t line, const std::string& what)
{
    throw ValidationError(source + ":" + std::to_string(line) + ": " + what);
}

// Parses each record, rethrowing any error with its source position.
template <typename F>
void for_each_record(std::string_view text, const std::string& source, F&& f)
{
    for (const auto& line : split_lines(text)) {
        try {
            const auto j = ojson::parse(line.text);
            if (!j.is_object()) fail(source, line.number, "record is not a JSON object");
            f(j, line.number);
        } catch (const nlohmann::json::exception& e) {
            fail(source, line.number, e.what());
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            if (msg.rfind(source + ":", 0) == 0) throw;
            fail(source, line.number, msg);
        }
    }
}

void expect_header(const ojson& j, const char* kind, const std::string& source, std::size_t line)
{
    if (j.value("kind", std::string()) != kind)
        fail(source, line, std::string("expected a '") + kind + "' header record");
    if (j.value("version", 1) != 1) fail(source, line, "unsupported version");
}

std::string dump_lines(const std::vector<ojson>& records)
{
    std::string out;
    for (const auto& r : records) {
        out += r.dump();
        out += '\n';
    }
    return out;
}

} // namespace

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(path.string() + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(tmp.string() + ": cannot open for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(tmp.string() + ": write failed");
    }
    std::filesystem::rename(tmp, path);
}

std::string serialize_scenario(const Scenario& s)
{
    std::vector<ojson> records;
    records.push_back(ojson{{"kind", "scenario"},
                            {"version", 1},
                            {"id", s.id},
                            {"task", to_string(s.task)},
                            {"system_preamble", s.system_preamble ? ojson(*s.system_preamble) : ojson(nullptr)},
                            {"label", s.label ? ojson(*s.label) : ojson(nullptr)}});
    for (const auto& w : s.words) {
        ojson r{{"kind", "word"}};
        r.update(ojson(w));
        records.push_back(std::move(r));
    }
    for (const auto& t : s.tools) {
        ojson r{{"kind", "tool"}};
        r.update(ojson(t));
        records.push_back(std::move(r));
    }
    for (const auto& c : s.ground_truth_calls) {
        ojson r{{"kind", "call"}};
        r.update(ojson(c));
        records.push_back(std::move(r));
    }
    for (const auto& [id, spans] : s.annotations)
        records.push_back(ojson{{"kind", "annotation"}, {"call_id", id}, {"value_spans", ojson(spans)}});
    return dump_lines(records);
}

Scenario parse_scenario(std::string_view text, const std::string& source)
{
    Scenario s;
    bool header = false;
    for_each_record(text, source, [&](const ojson& j, std::size_t line) {
        if (!header) {
            expect_header(j, "scenario", source, line);
            s.id = j.at("id").get<std::string>();
            s.task = task_from_string(j.at("task").get<std::string>());
            if (j.contains("system_preamble") && !j.at("system_preamble").is_null())
                s.system_preamble = j.at("system_preamble").get<std::string>();
            if (j.contains("label") && !j.at("label").is_null()) s.label = j.at("label").get<InterruptLabel>();
            header = true;
            return;
        }
        const auto kind = j.value("kind", std::string());
        if (kind == "word") {
            s.words.push_back(j.get<WordTiming>());
        } else if (kind == "tool") {
            s.tools.push_back(j.get<ToolSpec>());
        } else if (kind == "call") {
            s.ground_truth_calls.push_back(j.get<GroundTruthCall>());
        } else if (kind == "annotation") {
            const int id = j.at("call_id").get<int>();
            if (!s.annotations.emplace(id, j.at("value_spans").get<ValueSpans>()).second)
                fail(source, line, "call " + std::to_string(id) + " is annotated twice");
        } else {
            fail(source, line, "unknown record kind '" + kind + "'");
        }
    });
    if (!header) throw ValidationError(source + ": empty scenario file");
    try {
        validate(s);
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return s;
}

Scenario load_scenario(const std::filesystem::path& path)
{
    return parse_scenario(read_file(path), path.string());
}

std::string serialize_script(const Script& script, const std::string& scenario_id)
{
    std::vector<ojson> records;
    records.push_back(ojson{{"kind", "script"}, {"version", 1}, {"scenario_id", scenario_id}});
    auto sorted = script;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.step < b.step; });
    for (const auto& e : sorted) records.push_back(ojson{{"step", e.step}, {"tokens", e.tokens}});
    return dump_lines(records);
}

Script parse_script(std::string_view text, const std::string& source)
{
    Script script;
    bool header = false;
    for_each_record(text, source, [&](const ojson& j, std::size_t line) {
        if (!header) {
            expect_header(j, "script", source, line);
            header = true;
            return;
        }
        ScriptEntry e;
        e.step = j.at("step").get<int>();
        if (j.at("tokens").is_string())
            e.tokens = tokenize(j.at("tokens").get<std::string>());
        else
            e.tokens = j.at("tokens").get<Tokens>();
        script.push_back(std::move(e));
    });
    if (!header) throw ValidationError(source + ": empty script file");
    try {
        validate_script(script);
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return script;
}

Script load_script(const std::filesystem::path& path)
{
    return parse_script(read_file(path), path.string());
}

std::string serialize_labels(const std::vector<InterruptLabel>& labels)
{
    std::vector<ojson> records;
    for (const auto& l : labels) records.emplace_back(l);
    return dump_lines(records);
}

std::vector<InterruptLabel> parse_labels(std::string_view text, const std::string& source)
{
    std::vector<InterruptLabel> out;
    std::set<std::string> seen;
    for_each_record(text, source, [&](const ojson& j, std::size_t line) {
        auto l = j.get<InterruptLabel>();
        if (!seen.insert(l.scenario_id).second) fail(source, line, "duplicate label for '" + l.scenario_id + "'");
        out.push_back(std::move(l));
    });
    return out;
}

std::vector<InterruptLabel> load_labels(const std::filesystem::path& path)
{
    return parse_labels(read_file(path), path.string());
}

std::vector<GroundTruthCall> parse_ground_truth(std::string_view text, const std::string& source)
{
    std::vector<GroundTruthCall> out;
    for_each_record(text, source, [&](const ojson& j, std::size_t) { out.push_back(j.get<GroundTruthCall>()); });
    try {
        topological_order(out);
    } catch (const ValidationError& e) {
        throw ValidationError(source + ": " + e.what());
    }
    return out;
}

std::vector<GroundTruthCall> load_ground_truth(const std::filesystem::path& path)
{
    return parse_ground_truth(read_file(path), path.string());
}

std::string serialize_trace(const TurnTrace& t)
{
    std::vector<ojson> records;
    records.push_back(ojson{{"kind", "trace"},
                            {"version", 1},
                            {"scenario_id", t.scenario_id},
                            {"mode", to_string(t.mode)},
                            {"config", ojson(t.config)}});
    for (const auto& e : t.events) records.push_back(event_to_json(e));
    records.push_back(ojson{{"kind", "summary"},
                            {"status", to_string(t.status)},
                            {"error", t.error},
                            {"interrupted_at", t.interrupted_at ? ojson(*t.interrupted_at) : ojson(nullptr)},
                            {"t_interrupt", t.t_interrupt ? ojson(*t.t_interrupt) : ojson(nullptr)},
                            {"undelivered_overlap",
                             t.undelivered_overlap ? ojson(*t.undelivered_overlap) : ojson(nullptr)},
                            {"eoa_time", t.eoa_time ? ojson(*t.eoa_time) : ojson(nullptr)},
                            {"post_turn_tokens", t.post_turn_tokens}});
    return dump_lines(records);
}

TurnTrace parse_trace(std::string_view text, const std::string& source)
{
    TurnTrace t;
    bool header = false;
    bool summary = false;
    for_each_record(text, source, [&](const ojson& j, std::size_t line) {
        if (!header) {
            expect_header(j, "trace", source, line);
            t.scenario_id = j.at("scenario_id").get<std::string>();
            t.mode = mode_from_string(j.at("mode").get<std::string>());
            t.config = j.at("config").get<SessionConfig>();
            header = true;
            return;
        }
        if (summary) fail(source, line, "records after the summary line");
        if (j.contains("event")) {
            t.events.push_back(event_from_json(j));
            return;
        }
        if (j.value("kind", std::string()) != "summary") fail(source, line, "expected an event or summary record");
        t.status = status_from_string(j.at("status").get<std::string>());
        t.error = j.value("error", std::string());
        if (!j.at("interrupted_at").is_null()) t.interrupted_at = j.at("interrupted_at").get<int>();
        t.t_interrupt = optional_number(j, "t_interrupt");
        if (!j.at("undelivered_overlap").is_null()) t.undelivered_overlap = j.at("undelivered_overlap").get<SpeechChunk>();
        t.eoa_time = optional_number(j, "eoa_time");
        t.post_turn_tokens = j.at("post_turn_tokens").get<std::int64_t>();
        summary = true;
    });
    if (!header) throw ValidationError(source + ": empty trace file");
    if (!summary) throw ValidationError(source + ": trace has no summary line");
    return t;
}

TurnTrace load_trace(const std::filesystem::path& path)
{
    return parse_trace(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Synthetic scenarios

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // mt19937_64 output is fully specified, so these stay stable across toolchains.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    int between(int lo, int hi) { return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1)); }
    bool chance(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

std::vector<WordTiming> synth_words(Rng& rng, double duration, int n_words, const std::string& prefix)
{
    const auto total = std::max<long long>(1, std::llround(duration * 100.0));
    n_words = static_cast<int>(std::clamp<long long>(n_words, 1, total));
    std::set<long long> cuts;
    while (static_cast<int>(cuts.size()) < n_words - 1)
        cuts.insert(1 + static_cast<long long>(rng.uniform() * static_cast<double>(total - 1)));
    cuts.insert(total);
    std::vector<WordTiming> words;
    long long prev = 0;
    int j = 0;
    for (long long c : cuts) {
        words.push_back({prefix + std::to_string(++j), static_cast<double>(prev) / 100.0, static_cast<double>(c) / 100.0});
        prev = c;
    }
    return words;
}

Tokens filler(Rng& rng, int n)
{
    static const char* kWords[] = {"the", "user", "is", "asking", "about", "so", "maybe", "check", "this", "next"};
    Tokens out;
    for (int i = 0; i < n; ++i) out.emplace_back(kWords[rng.between(0, 9)]);
    return out;
}

// Generated-token count of a budgeted block whose model content is `content`.
struct BlockShape {
    std::int64_t kept;
    bool truncated;
    std::int64_t generated;
};

BlockShape block_shape(std::size_t content, std::optional<std::int64_t> budget)
{
    const auto n = static_cast<std::int64_t>(content);
    const auto kept = budget ? std::min(n, *budget) : n;
    const bool truncated = budget && n > *budget;
    return {kept, truncated, 1 + kept + (truncated ? 1 : 0)};
}

SyntheticCase synth_interrupt(Rng& rng, std::uint64_t seed, const SyntheticParams& p)
{
    SyntheticCase out;
    auto& s = out.scenario;
    s.id = "syn-interrupt-" + std::to_string(seed);
    s.task = Task::Interrupt;
    const int n_words = p.n_words > 0 ? p.n_words : std::max(1, static_cast<int>(std::lround(p.duration * 2.5)));
    s.words = synth_words(rng, p.duration, n_words, "w");

    const bool wrong = p.wrong ? *p.wrong : rng.chance(0.5);
    InterruptLabel label{s.id, Subset::Correct, std::nullopt};
    std::optional<std::size_t> error_word;
    if (wrong) {
        error_word = static_cast<std::size_t>(rng.between(0, static_cast<int>(s.words.size()) - 1));
        label.subset = Subset::Wrong;
        label.t_error = s.words[*error_word].start;
    }
    s.label = label;

    const auto chunks = segment_transcript(s.words, p.chunking);
    const int n = static_cast<int>(chunks.size());
    out.expected.num_chunks = n;
    const auto budget = thinking_budget(p.chunking);
    const int k = p.interrupt_chunk.value_or(0);

    int step = 0;
    std::int64_t last_generated = 0;
    for (int i = 1; i <= n; ++i) {
        const bool post = i == n;
        const std::optional<std::int64_t> b = post ? p.chunking.final_budget : std::optional<std::int64_t>(budget);
        Tokens content;
        if (i == k) {
            content = filler(rng, rng.between(0, 6));
            content.emplace_back(marker::kInterrupt);
        } else {
            int len = rng.between(0, 12);
            if (!post && rng.chance(p.overlong_prob)) len = static_cast<int>(budget) + rng.between(1, 20);
            content = filler(rng, len);
        }
        content.emplace_back(marker::kThinkClose);
        out.script.push_back({++step, content});
        const auto shape = block_shape(content.size(), b);
        last_generated = shape.generated;
        if (post) out.expected.post_turn_tokens += shape.generated;

        const auto interrupt_pos = std::find(content.begin(), content.end(), marker::kInterrupt) - content.begin();
        const bool fired = !post && i == k && interrupt_pos < shape.kept;
        if (fired) {
            out.expected.interrupted_at = k;
            out.expected.t_interrupt = k * p.chunking.t_chunk + static_cast<double>(last_generated + 1) / p.chunking.n_tps;
            // The reply quotes the flagged word when the user has said it by now.
            const int heard = std::min(k + 1, n);
            std::string quoted = "that";
            if (error_word && chunk_index_for(s.words[*error_word].end, p.chunking.t_chunk) <= heard) {
                quoted = s.words[*error_word].text;
                out.expected.valid_interrupt = true;
            }
            out.script.push_back({++step, {"Sorry", "to", "cut", "in", "-", "did", "you", "mean", quoted, "?"}});
            return out;
        }
    }
    Tokens answer{"The", "answer", "is", "42", "."};
    out.expected.post_turn_tokens += static_cast<std::int64_t>(answer.size());
    out.script.push_back({++step, std::move(answer)});
    return out;
}

SyntheticCase synth_tool(Rng& rng, std::uint64_t seed, const SyntheticParams& p)
{
    using nlohmann::json;
    SyntheticCase out;
    auto& s = out.scenario;
    s.id = "syn-tool-" + std::to_string(seed);
    s.task = Task::ToolCall;
    s.system_preamble = "You can call the tools below while the user is speaking.";
    const int n_calls = std::max(1, p.n_calls);
    const int n_words =
        p.n_words > 0 ? p.n_words : std::max(2 * n_calls, static_cast<int>(std::lround(p.duration * 2.5)));
    s.words = synth_words(rng, p.duration, n_words, "w");
    const int last_word = static_cast<int>(s.words.size()) - 1;

    std::map<int, ValueSpans> annotations;
    for (int j = 1; j <= n_calls; ++j) {
        ToolSpec spec;
        spec.name = "Tool_" + std::to_string(j);
        spec.description = "Looks up item " + std::to_string(j) + ".";
        spec.parameters["query"] = {"string", true, "what to look up"};
        spec.parameters["count"] = {"integer", false, "how many results"};
        GroundTruthCall c;
        c.id = j;
        c.name = spec.name;
        const int qw = rng.between(0, last_word);
        const int cw = rng.between(0, last_word);
        s.words[static_cast<std::size_t>(qw)].text = "item" + std::to_string(j);
        c.arguments = json{{"query", s.words[static_cast<std::size_t>(qw)].text}, {"count", j}};
        ValueSpans spans{{"query", WordSpan{static_cast<std::size_t>(qw), static_cast<std::size_t>(qw)}},
                         {"count", WordSpan{static_cast<std::size_t>(cw), static_cast<std::size_t>(cw)}}};
        if (j > 1 && rng.chance(p.dependency_prob)) {
            const int parent = rng.between(1, j - 1);
            c.depends_on.insert(parent);
            c.arguments["ref"] = "result" + std::to_string(parent);
            spans["ref"] = FromDependency{};
            spec.parameters["ref"] = {"string", false, "output of an earlier lookup"};
        }
        c.response = "result" + std::to_string(j) + " found";
        c.answer_key = "result" + std::to_string(j);
        s.tools.push_back(std::move(spec));
        s.ground_truth_calls.push_back(std::move(c));
        annotations[j] = std::move(spans);
    }
    // Texts were overwritten after the spans were drawn; a word can be reused by
    // several calls, so rebuild arguments from the final texts.
    for (auto& c : s.ground_truth_calls) {
        const auto& span = std::get<WordSpan>(annotations[c.id].at("query"));
        c.arguments["query"] = s.words[span.first].text;
    }
    s.ground_truth_calls = assign_earliest_times(std::move(s.ground_truth_calls), s.words, annotations);
    s.annotations = annotations;

    const auto chunks = segment_transcript(s.words, p.chunking);
    const int n = static_cast<int>(chunks.size());
    out.expected.num_chunks = n;
    out.expected.total_gt = n_calls;
    const auto assignment = assign_to_chunks(s.ground_truth_calls, p.chunking, n);

    std::set<int> failed;
    {
        std::vector<int> ids;
        for (int j = 1; j <= n_calls; ++j) ids.push_back(j);
        const int f = std::clamp(p.failed_calls, 0, n_calls);
        while (static_cast<int>(failed.size()) < f) failed.insert(ids[static_cast<std::size_t>(rng.between(0, n_calls - 1))]);
    }
    const auto call_of = [&](int id) -> const GroundTruthCall& { return s.ground_truth_calls[static_cast<std::size_t>(id - 1)]; };
    const auto render = [&](int id, bool wrong_args) {
        const auto& c = call_of(id);
        json args = c.arguments;
        if (wrong_args) args["query"] = "nothing";
        // Odd ids spell the count as a string to exercise numeric normalisation.
        else if (id % 2 == 1) args["count"] = std::to_string(id) + ".0";
        Tokens t{"calling"};
        for (auto& tok : render_tool_call(c.name, args)) t.push_back(std::move(tok));
        return t;
    };

    int step = 0;
    // One block: each call is its own generation step, then a closing step.
    // Mid-turn blocks without calls use the no-call template; after end of audio
    // there is nothing left to wait for, so an empty block just closes.
    const auto block = [&](const std::vector<std::pair<int, bool>>& calls, bool after_eoa) -> std::int64_t {
        std::int64_t generated = 1;
        if (calls.empty() && !after_eoa) {
            auto t = tokenize(std::string(kNoCallTemplate));
            t.emplace_back(marker::kThinkClose);
            generated += static_cast<std::int64_t>(t.size());
            out.script.push_back({++step, std::move(t)});
            return generated;
        }
        for (const auto& [id, wrong_args] : calls) {
            auto t = render(id, wrong_args);
            generated += static_cast<std::int64_t>(t.size());
            out.script.push_back({++step, std::move(t)});
        }
        Tokens close{"done", std::string(marker::kThinkClose)};
        generated += static_cast<std::int64_t>(close.size());
        out.script.push_back({++step, std::move(close)});
        return generated;
    };
    const auto chunk_calls = [&](int i) {
        std::vector<int> ids;
        if (auto it = assignment.calls_by_chunk.find(i); it != assignment.calls_by_chunk.end()) ids = it->second;
        return ids;
    };

    std::set<int> hits_early, hits_late;
    std::int64_t post = 0;
    if (p.mode == Mode::CallAfterListen) {
        std::vector<std::pair<int, bool>> calls;
        for (int id : topological_order(s.ground_truth_calls)) {
            calls.emplace_back(id, failed.contains(id));
            if (!failed.contains(id)) hits_late.insert(id);
        }
        post += block(calls, true);
    } else {
        std::vector<int> retry;
        for (int i = 1; i < n; ++i) {
            std::vector<std::pair<int, bool>> calls;
            for (int id : chunk_calls(i)) {
                calls.emplace_back(id, failed.contains(id));
                if (failed.contains(id))
                    retry.push_back(id);
                else
                    hits_early.insert(id);
            }
            block(calls, false);
        }
        std::vector<std::pair<int, bool>> last;
        if (p.mode == Mode::Combined) {
            for (int id : topological_order(s.ground_truth_calls)) {
                const bool pending = std::find(retry.begin(), retry.end(), id) != retry.end() ||
                                     chunk_index_for(*call_of(id).earliest_time, p.chunking.t_chunk) >= n;
                if (!pending) continue;
                const bool final_chunk = chunk_index_for(*call_of(id).earliest_time, p.chunking.t_chunk) >= n;
                const bool wrong_args = final_chunk && failed.contains(id);
                last.emplace_back(id, wrong_args);
                if (!wrong_args) hits_late.insert(id);
            }
        } else {
            for (int id : chunk_calls(n)) {
                last.emplace_back(id, failed.contains(id));
                if (!failed.contains(id)) hits_late.insert(id);
            }
        }
        post += block(last, true);
    }
    Tokens answer{"Here", "is", "what", "I", "found", ":"};
    for (const auto& c : s.ground_truth_calls) answer.push_back(*c.answer_key);
    answer.emplace_back(".");
    post += static_cast<std::int64_t>(answer.size());
    out.script.push_back({++step, std::move(answer)});

    out.expected.early_hits = static_cast<int>(hits_early.size());
    out.expected.late_hits = static_cast<int>(hits_late.size());
    out.expected.success = out.expected.early_hits + out.expected.late_hits == n_calls;
    out.expected.post_turn_tokens = post;
    return out;
}

} // namespace

SyntheticCase generate_synthetic(std::uint64_t seed, const SyntheticParams& params)
{
    validate(params.chunking);
    if (!(params.duration > 0.0)) throw ValidationError("synthetic duration must be positive");
    if (!(params.chunking.n_tps > 0.0)) throw ValidationError("synthetic scenarios need n_tps > 0");
    Rng rng(seed);
    auto out = params.task == Task::Interrupt ? synth_interrupt(rng, seed, params) : synth_tool(rng, seed, params);
    validate(out.scenario);
    return out;
}

} // namespace shanks
