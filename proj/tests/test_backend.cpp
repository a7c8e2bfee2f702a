#include "shanks/backend.hpp"
#include "shanks/errors.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <thread>

using namespace shanks;

namespace {

const std::vector<std::string> kThinkStop{"</think>"};

GenerationRequest request(std::int64_t max_tokens, std::vector<std::string> stops = kThinkStop)
{
    return GenerationRequest{{"[EOPA]"}, max_tokens, std::move(stops)};
}

Tokens numbered(int n)
{
    Tokens t;
    for (int i = 0; i < n; ++i) t.push_back("t" + std::to_string(i));
    return t;
}

// Local HTTP server answering with a fixed handler on an ephemeral port.
struct TestServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;

    explicit TestServer(httplib::Server::Handler handler)
    {
        server.Post("/generate", std::move(handler));
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~TestServer()
    {
        server.stop();
        thread.join();
    }
    RemoteConfig config() const
    {
        RemoteConfig c;
        c.url = "http://127.0.0.1:" + std::to_string(port) + "/generate";
        c.timeout = std::chrono::milliseconds(2000);
        return c;
    }
};

} // namespace

TEST_CASE("scripted backend echoes a step up to the stop marker")
{
    ScriptedBackend b({{1, {"The", "user", "asks", "</think>"}}});
    const auto r = b.generate(request(320));
    CHECK(r.tokens == Tokens{"The", "user", "asks", "</think>"});
    CHECK(r.finish == FinishReason::Stopped);
}

TEST_CASE("scripted backend truncates at the budget")
{
    ScriptedBackend b({{1, numbered(400)}});
    const auto r = b.generate(request(320));
    CHECK(r.tokens.size() == 320);
    CHECK(r.tokens.back() == "t319");
    CHECK(r.finish == FinishReason::BudgetExhausted);
}

TEST_CASE("zero budget returns nothing")
{
    ScriptedBackend b({{1, {"a"}}});
    const auto r = b.generate(request(0));
    CHECK(r.tokens.empty());
    CHECK(r.finish == FinishReason::BudgetExhausted);
    CHECK(shape_continuation({}, 0, kThinkStop).finish == FinishReason::BudgetExhausted);
}

TEST_CASE("scripted lookup")
{
    const Script s{{1, {"a"}}, {2, {"b"}}};
    CHECK(scripted_lookup(s, 2) == Tokens{"b"});
    CHECK(scripted_lookup(Script{{1, {"a"}}}, 5).empty());

    const Script three{{1, {"x", "y"}}, {2, {"z"}}, {3, {"w"}}};
    ScriptedBackend b(three);
    Tokens replay;
    for (int i = 0; i < 3; ++i) {
        auto r = b.generate(request(100, {}));
        CHECK(r.finish == FinishReason::EndOfSequence);
        replay.insert(replay.end(), r.tokens.begin(), r.tokens.end());
    }
    CHECK(replay == Tokens{"x", "y", "z", "w"});
    CHECK(b.steps_served() == 3);
    // A missing step models a silent thinker.
    CHECK(b.generate(request(100)).tokens.empty());
    b.reset();
    CHECK(b.generate(request(100, {})).tokens == Tokens{"x", "y"});
}

TEST_CASE("scripts must be unique and contiguous")
{
    CHECK_THROWS_AS(validate_script(Script{{1, {}}, {1, {}}}), ValidationError);
    CHECK_THROWS_AS(validate_script(Script{{1, {}}, {3, {}}}), ValidationError);
    CHECK_THROWS_AS(validate_script(Script{{0, {}}}), ValidationError);
    CHECK_NOTHROW(validate_script(Script{{2, {}}, {1, {}}}));
}

TEST_CASE("scripted backend rejects an oversized context")
{
    ScriptedBackend b({{1, {"a"}}}, 0);
    CHECK_THROWS_AS(b.generate(request(5)), ContextOverflowError);
}

TEST_CASE("identical scripts behave identically at every step")
{
    Script s;
    for (int i = 1; i <= 20; ++i) s.push_back({i, numbered(i * 7 % 23)});
    ScriptedBackend a(s), b(s);
    for (int i = 0; i < 20; ++i) {
        const auto budget = static_cast<std::int64_t>(i % 9);
        const auto ra = a.generate(request(budget));
        const auto rb = b.generate(request(budget));
        CHECK(ra == rb);
        CHECK(static_cast<std::int64_t>(ra.tokens.size()) <= budget);
    }
}

TEST_CASE("scripted backend tolerates concurrent callers")
{
    Script s;
    for (int i = 1; i <= 400; ++i) s.push_back({i, {std::to_string(i)}});
    ScriptedBackend b(s);
    std::vector<std::thread> threads;
    std::vector<std::vector<int>> seen(4);
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&, t] {
            for (int i = 0; i < 100; ++i) seen[t].push_back(std::stoi(b.generate(request(5, {})).tokens.at(0)));
        });
    for (auto& th : threads) th.join();
    std::vector<int> all;
    for (const auto& v : seen) all.insert(all.end(), v.begin(), v.end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < 400; ++i) CHECK(all[i] == i + 1);
}

TEST_CASE("remote backend speaks the JSON protocol")
{
    nlohmann::json received;
    TestServer srv([&](const httplib::Request& req, httplib::Response& res) {
        received = nlohmann::json::parse(req.body);
        res.set_content(R"({"tokens":["a","b","</think>","c"],"finish":"eos"})", "application/json");
    });
    RemoteBackend b(srv.config());
    const auto r = b.generate(GenerationRequest{{"x", "[EOPA]"}, 10, {"</think>"}});
    CHECK(received["context"] == nlohmann::json::array({"x", "[EOPA]"}));
    CHECK(received["max_tokens"] == 10);
    CHECK(received["stop"] == nlohmann::json::array({"</think>"}));
    // The client enforces the stop marker even if the server overshoots.
    CHECK(r.tokens == Tokens{"a", "b", "</think>"});
    CHECK(r.finish == FinishReason::Stopped);

    const auto capped = b.generate(GenerationRequest{{}, 1, {"</think>"}});
    CHECK(capped.tokens == Tokens{"a"});
    CHECK(capped.finish == FinishReason::BudgetExhausted);
}

TEST_CASE("remote errors map to typed failures")
{
    int status = 500;
    TestServer srv([&](const httplib::Request&, httplib::Response& res) {
        res.status = status;
        res.set_content(status == 200 ? "not json" : "", "application/json");
    });
    RemoteBackend b(srv.config());
    try {
        b.generate(request(5));
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.retriable());
    }
    status = 400;
    try {
        b.generate(request(5));
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK_FALSE(e.retriable());
    }
    status = 413;
    CHECK_THROWS_AS(b.generate(request(5)), ContextOverflowError);
    status = 200;
    CHECK_THROWS_AS(b.generate(request(5)), TransportError);
}

TEST_CASE("unreachable remote is a retriable transport error")
{
    RemoteConfig c;
    c.url = "http://127.0.0.1:1/generate";
    c.timeout = std::chrono::milliseconds(500);
    RemoteBackend b(c);
    try {
        b.generate(request(5));
        FAIL("expected a transport error");
    } catch (const TransportError& e) {
        CHECK(e.retriable());
    }
    CHECK_THROWS_AS(RemoteBackend(RemoteConfig{"no-scheme", {}}), ValidationError);
}
