#include "shanks/errors.hpp"
#include "shanks/remote.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace shanks;
using nlohmann::json;

namespace {

struct JudgeServer {
    httplib::Server server;
    int port = 0;
    std::thread thread;
    std::vector<json> bodies;

    JudgeServer()
    {
        server.Post("/match", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            bodies.push_back(body);
            // Case-insensitive name comparison, standing in for a model judge.
            auto lower = [](std::string s) {
                for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
                return s;
            };
            const bool ok = lower(body["call"]["name"]) == lower(body["truth"]["name"]);
            res.set_content(json{{"match", ok}}.dump(), "application/json");
        });
        server.Post("/interrupt", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = json::parse(req.body);
            bodies.push_back(body);
            res.set_content(json{{"valid", body["response"].get<std::string>().find("wait") != std::string::npos}}.dump(),
                            "application/json");
        });
        server.Post("/quality", [this](const httplib::Request& req, httplib::Response& res) {
            bodies.push_back(json::parse(req.body));
            res.set_content(R"({"correctness":2,"completeness":1})", "application/json");
        });
        server.Post("/broken", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"correctness":7,"completeness":1})", "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~JudgeServer()
    {
        server.stop();
        thread.join();
    }
    RemoteConfig at(const std::string& path) const
    {
        return RemoteConfig{"http://127.0.0.1:" + std::to_string(port) + path, std::chrono::milliseconds(2000)};
    }
};

} // namespace

TEST_CASE("remote matcher drives the tool environment")
{
    JudgeServer srv;
    GroundTruthCall truth;
    truth.id = 1;
    truth.name = "Search";
    truth.response = "found";
    ToolEnvironment env({}, {truth}, std::make_shared<RemoteCallMatcher>(srv.at("/match")));
    const auto out = env.match(ToolCall{"search", json::object(), {}}, 1.0, 2.0);
    CHECK(out.matched == 1);
    CHECK(out.response_payload == "found");
    REQUIRE(srv.bodies.size() == 1);
    CHECK(srv.bodies[0]["truth"]["name"] == "Search");
    CHECK(env.match(ToolCall{"other", json::object(), {}}, 1.0, 2.0).is_error);
}

TEST_CASE("remote interrupt and quality judges")
{
    JudgeServer srv;
    const auto judge = remote_interrupt_judge(srv.at("/interrupt"));
    CHECK(judge({"a", "b"}, {"wait", "what"}));
    CHECK_FALSE(judge({"a"}, {"ok"}));
    CHECK(srv.bodies[0]["user_prefix"] == "a b");

    Scenario s;
    s.id = "q";
    s.words = {{"hello", 0, 1}};
    TurnTrace t;
    t.events.push_back(ResponseEmitted{{{"hi"}, 1.0}});
    const auto q = remote_quality_judge(srv.at("/quality"))(s, t);
    CHECK(q.correctness == 2);
    CHECK(q.completeness == 1);
    CHECK(srv.bodies.back()["query"] == "hello");
    CHECK(srv.bodies.back()["response"] == "hi");

    CHECK_THROWS_AS(remote_quality_judge(srv.at("/broken"))(s, t), TransportError);
    CHECK_THROWS_AS(remote_interrupt_judge(srv.at("/missing"))({}, {}), TransportError);
}
