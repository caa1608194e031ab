// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "autoduct/error.hpp"
#include "autoduct/numeric.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace autoduct::agents {

struct ChatMessage {
    std::string role; // system | user | assistant
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

enum class Purpose { generate, tune, think, synthesize };

inline std::string_view to_string(Purpose p) noexcept
{
    switch (p) {
    case Purpose::generate: return "generate";
    case Purpose::tune: return "tune";
    case Purpose::think: return "think";
    case Purpose::synthesize: return "synthesize";
    }
    return "unknown";
}

/// One planner call. `messages` is the rendered prompt sent to chat
/// backends; `context` carries the same facts in structured form for the
/// scripted backend.
struct PlannerRequest {
    Purpose purpose = Purpose::generate;
    std::string agent; // coding | tuning | supervisor | react
    std::string stage; // model | train | evaluate, empty when not stage-bound
    std::vector<ChatMessage> messages;
    nlohmann::json context = nlohmann::json::object();

    [[nodiscard]] std::string prompt_text() const
    {
        std::string text;
        for (const auto& m : messages)
            text += m.role + "\n" + m.content + "\n";
        return text;
    }

    [[nodiscard]] std::string digest() const { return content_digest(prompt_text()); }
};

struct TokenCount {
    long long prompt = 0;
    long long completion = 0;

    [[nodiscard]] long long total() const noexcept { return prompt + completion; }
    friend bool operator==(const TokenCount&, const TokenCount&) = default;
};

struct PlannerReply {
    nlohmann::json content; // parsed JSON object
    TokenCount tokens;
    int attempts = 1;
};

/// Decision backend behind both agent loops.
class Planner {
public:
    virtual ~Planner() = default;
    [[nodiscard]] virtual std::string id() const = 0;
    virtual PlannerReply complete(const PlannerRequest& request) = 0;
};

struct CallRecord {
    Purpose purpose = Purpose::generate;
    std::string agent;
    std::string stage;
    std::string prompt_digest;
    TokenCount tokens;
};

/// Per-call token counts; totals are always recomputed from the calls.
struct TokenUsage {
    std::vector<CallRecord> calls;

    void record(const PlannerRequest& req, const PlannerReply& reply)
    {
        calls.push_back({req.purpose, req.agent, req.stage, req.digest(), reply.tokens});
    }

    [[nodiscard]] TokenCount totals() const noexcept
    {
        TokenCount t;
        for (const auto& c : calls) {
            t.prompt += c.tokens.prompt;
            t.completion += c.tokens.completion;
        }
        return t;
    }

    [[nodiscard]] long long total() const noexcept { return totals().total(); }
};

inline nlohmann::json to_json(const TokenUsage& u)
{
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : u.calls)
        calls.push_back({{"purpose", std::string(to_string(c.purpose))},
                         {"agent", c.agent},
                         {"stage", c.stage},
                         {"prompt_digest", c.prompt_digest},
                         {"prompt_tokens", c.tokens.prompt},
                         {"completion_tokens", c.tokens.completion}});
    const auto t = u.totals();
    return {{"calls", calls},
            {"prompt_tokens", t.prompt},
            {"completion_tokens", t.completion},
            {"total_tokens", t.total()}};
}

inline TokenUsage token_usage_from_json(const nlohmann::json& j)
{
    TokenUsage u;
    try {
        for (const auto& c : j.at("calls")) {
            CallRecord r;
            const auto purpose = c.at("purpose").get<std::string>();
            for (auto p : {Purpose::generate, Purpose::tune, Purpose::think, Purpose::synthesize})
                if (to_string(p) == purpose)
                    r.purpose = p;
            r.agent = c.at("agent").get<std::string>();
            r.stage = c.at("stage").get<std::string>();
            r.prompt_digest = c.at("prompt_digest").get<std::string>();
            r.tokens = {c.at("prompt_tokens").get<long long>(), c.at("completion_tokens").get<long long>()};
            u.calls.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::corrupt_state, std::string("token log: ") + e.what());
    }
    return u;
}

} // namespace autoduct::agents
