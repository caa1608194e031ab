// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "support.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace autoduct;
using namespace autoduct::agents;

namespace {

/// Local chat-completion endpoint that fails the first `failures` calls
/// with `failure_status` and then answers with `content`.
class MockEndpoint {
public:
    MockEndpoint(int failures, int failure_status, std::string content)
        : failures_(failures), failure_status_(failure_status), content_(std::move(content))
    {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            last_body = req.body;
            if (calls++ < failures_) {
                res.status = failure_status_;
                res.set_content("{}", "application/json");
                return;
            }
            const nlohmann::json reply{
                {"choices", {{{"message", {{"role", "assistant"}, {"content", content_}}}}}},
                {"usage", {{"prompt_tokens", 120}, {"completion_tokens", 30}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockEndpoint()
    {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    std::atomic<int> calls{0};
    std::string last_auth;
    std::string last_body;

private:
    int failures_;
    int failure_status_;
    std::string content_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

LlmPlannerConfig config_for(const MockEndpoint& m)
{
    LlmPlannerConfig c;
    c.base_url = m.url();
    c.model = "mock-model";
    c.api_key_env = "AUTODUCT_TEST_KEY";
    c.initial_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::seconds(5);
    return c;
}

PlannerRequest simple_request()
{
    PlannerRequest r;
    r.purpose = Purpose::generate;
    r.agent = "coding";
    r.stage = "model";
    r.messages = {{"system", "reply with JSON"}, {"user", "write the model task"}};
    return r;
}

struct KeyGuard {
    KeyGuard() { ::setenv("AUTODUCT_TEST_KEY", "sk-test", 1); }
    ~KeyGuard() { ::unsetenv("AUTODUCT_TEST_KEY"); }
};

} // namespace

TEST(LlmPlannerTest, RetriesTransientFailuresWithBackoff)
{
    KeyGuard key;
    MockEndpoint mock(2, 503, "{\"config\": {}}");
    std::vector<std::chrono::milliseconds> sleeps;
    LlmPlanner planner(config_for(mock), [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    const auto reply = planner.complete(simple_request());
    EXPECT_EQ(reply.attempts, 3);
    EXPECT_EQ(mock.calls, 3);
    EXPECT_EQ(reply.tokens, (TokenCount{120, 30}));
    EXPECT_TRUE(reply.content.contains("config"));
    ASSERT_EQ(sleeps.size(), 2u);
    EXPECT_EQ(sleeps[1], 2 * sleeps[0]);
    const auto log = planner.attempt_log();
    ASSERT_EQ(log.size(), 3u);
    EXPECT_EQ(log[0].http_status, 503);
    EXPECT_EQ(log[2].http_status, 200);
    EXPECT_EQ(mock.last_auth, "Bearer sk-test");
    const auto body = nlohmann::json::parse(mock.last_body);
    EXPECT_EQ(body.at("model"), "mock-model");
    EXPECT_EQ(body.at("messages").size(), 2u);
    EXPECT_EQ(planner.id(), "llm:mock-model");
}

TEST(LlmPlannerTest, GivesUpAfterMaxAttempts)
{
    KeyGuard key;
    MockEndpoint mock(10, 429, "{}");
    LlmPlanner planner(config_for(mock), [](auto) {});
    try {
        (void)planner.complete(simple_request());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::planner_unavailable);
    }
    EXPECT_EQ(mock.calls, 3);
}

TEST(LlmPlannerTest, RejectedCredentialsFailImmediately)
{
    KeyGuard key;
    MockEndpoint mock(10, 401, "{}");
    LlmPlanner planner(config_for(mock), [](auto) {});
    try {
        (void)planner.complete(simple_request());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::auth_failure);
    }
    EXPECT_EQ(mock.calls, 1);
}

TEST(LlmPlannerTest, MissingKeyIsAuthFailure)
{
    ::unsetenv("AUTODUCT_TEST_KEY");
    LlmPlannerConfig c;
    c.api_key_env = "AUTODUCT_TEST_KEY";
    try {
        LlmPlanner planner(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::auth_failure);
    }
}

TEST(LlmPlannerTest, FencedJsonIsAcceptedAndProseRejected)
{
    KeyGuard key;
    {
        MockEndpoint mock(0, 500, "```json\n{\"summary\": \"done\"}\n```");
        LlmPlanner planner(config_for(mock), [](auto) {});
        EXPECT_EQ(planner.complete(simple_request()).content.at("summary"), "done");
    }
    {
        MockEndpoint mock(0, 500, "I think the model should have three layers.");
        LlmPlanner planner(config_for(mock), [](auto) {});
        try {
            (void)planner.complete(simple_request());
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), Errc::schema_invalid);
        }
    }
}

TEST(LlmPlannerTest, UnreachableEndpointIsUnavailable)
{
    KeyGuard key;
    LlmPlannerConfig c;
    c.api_key_env = "AUTODUCT_TEST_KEY";
    c.base_url = "http://127.0.0.1:9/v1";
    c.max_attempts = 2;
    c.timeout = std::chrono::seconds(2);
    LlmPlanner planner(c, [](auto) {});
    try {
        (void)planner.complete(simple_request());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::planner_unavailable);
    }
    EXPECT_EQ(planner.attempt_log().size(), 2u);
}

TEST(LlmPlannerTest, BaseUrlSplitting)
{
    EXPECT_EQ(agents::detail::split_base_url("http://h:8000/v1/"), (std::pair<std::string, std::string>{"http://h:8000", "/v1"}));
    EXPECT_EQ(agents::detail::split_base_url("https://h"), (std::pair<std::string, std::string>{"https://h", ""}));
    EXPECT_THROW((void)agents::detail::split_base_url("h:8000"), Error);
}
