// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/agents/planner.hpp"
#include "autoduct/error.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace autoduct::agents {

struct LlmPlannerConfig {
    std::string base_url = "http://127.0.0.1:8000/v1"; // scheme://host[:port][/prefix]
    std::string model = "gpt-4.1";
    std::string api_key_env = "AUTODUCT_API_KEY";
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::seconds timeout{120};
    double temperature = 0.0;
};

struct AttemptRecord {
    int attempt = 0;
    int http_status = 0; // 0 when no response arrived
    std::string error;
};

namespace detail {

/// Splits "http://host:port/v1" into ("http://host:port", "/v1").
inline std::pair<std::string, std::string> split_base_url(const std::string& url)
{
    const auto scheme = url.find("://");
    if (scheme == std::string::npos)
        throw Error(Errc::invalid_argument, "base url '" + url + "' lacks a scheme");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos)
        return {url, ""};
    auto prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    return {url.substr(0, slash), prefix};
}

/// Chat models sometimes wrap JSON in a markdown fence.
inline std::string strip_code_fence(std::string text)
{
    const auto open = text.find("```");
    if (open == std::string::npos)
        return text;
    const auto body = text.find('\n', open);
    const auto close = text.rfind("```");
    if (body == std::string::npos || close <= body)
        return text;
    return text.substr(body + 1, close - body - 1);
}

} // namespace detail

/// Chat-completion backend over HTTP. Transient failures (no response, 429,
/// 5xx) are retried with exponential backoff; 401/403 fail immediately.
class LlmPlanner : public Planner {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit LlmPlanner(LlmPlannerConfig config, Sleeper sleep = {})
        : config_(std::move(config)), sleep_(std::move(sleep))
    {
        const char* key = std::getenv(config_.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw Error(Errc::auth_failure, "environment variable " + config_.api_key_env + " is not set");
        api_key_ = key;
        if (config_.max_attempts < 1)
            throw Error(Errc::invalid_argument, "max_attempts must be at least 1");
        std::tie(host_, prefix_) = detail::split_base_url(config_.base_url);
        if (!sleep_)
            sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }

    [[nodiscard]] std::string id() const override { return "llm:" + config_.model; }

    PlannerReply complete(const PlannerRequest& request) override
    {
        nlohmann::json messages = nlohmann::json::array();
        for (const auto& m : request.messages)
            messages.push_back({{"role", m.role}, {"content", m.content}});
        const nlohmann::json body{{"model", config_.model},
                                  {"messages", messages},
                                  {"temperature", config_.temperature},
                                  {"response_format", {{"type", "json_object"}}}};
        const httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

        auto backoff = config_.initial_backoff;
        std::string last_error;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            if (attempt > 1) {
                sleep_(backoff);
                backoff *= 2;
            }
            httplib::Client client(host_);
            client.set_connection_timeout(config_.timeout);
            client.set_read_timeout(config_.timeout);
            client.set_write_timeout(config_.timeout);
            const auto res = client.Post(prefix_ + "/chat/completions", headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                log_attempt({attempt, 0, last_error});
                continue;
            }
            const int status = res->status;
            if (status == 401 || status == 403) {
                log_attempt({attempt, status, "rejected credentials"});
                throw Error(Errc::auth_failure, "endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
            }
            if (status == 429 || status >= 500) {
                last_error = "HTTP " + std::to_string(status);
                log_attempt({attempt, status, last_error});
                continue;
            }
            if (status != 200) {
                log_attempt({attempt, status, "HTTP " + std::to_string(status)});
                throw Error(Errc::planner_unavailable, "endpoint answered HTTP " + std::to_string(status));
            }
            log_attempt({attempt, status, {}});
            auto reply = parse_response(res->body);
            reply.attempts = attempt;
            return reply;
        }
        throw Error(Errc::planner_unavailable,
                    "no answer after " + std::to_string(config_.max_attempts) + " attempts; last: " + last_error);
    }

    [[nodiscard]] std::vector<AttemptRecord> attempt_log() const
    {
        std::lock_guard lock(mutex_);
        return attempts_;
    }

private:
    void log_attempt(AttemptRecord r)
    {
        std::lock_guard lock(mutex_);
        attempts_.push_back(std::move(r));
    }

    static PlannerReply parse_response(const std::string& text)
    {
        PlannerReply reply;
        std::string content;
        try {
            const auto j = nlohmann::json::parse(text);
            content = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (j.contains("usage")) {
                const auto& u = j.at("usage");
                reply.tokens.prompt = u.value("prompt_tokens", 0LL);
                reply.tokens.completion = u.value("completion_tokens", 0LL);
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::planner_unavailable, std::string("malformed chat-completion response: ") + e.what());
        }
        try {
            reply.content = nlohmann::json::parse(detail::strip_code_fence(content));
        } catch (const nlohmann::json::exception&) {
            throw Error(Errc::schema_invalid, "planner reply is not JSON: " + content.substr(0, 200));
        }
        return reply;
    }

    LlmPlannerConfig config_;
    Sleeper sleep_;
    std::string api_key_;
    std::string host_;
    std::string prefix_;
    mutable std::mutex mutex_;
    std::vector<AttemptRecord> attempts_;
};

} // namespace autoduct::agents
