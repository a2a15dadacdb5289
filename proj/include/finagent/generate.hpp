#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finagent/concurrency.hpp"
#include "finagent/prompt.hpp"
#include "finagent/response.hpp"
#include "finagent/retrieve.hpp"

namespace finagent {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r) noexcept;

struct ChatMessage {
    Role role = Role::User;
    std::string content;
};

/// Everything a backend may look at. HTTP backends only serialise `messages`;
/// the mock reads the structured window directly.
struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    const ContextWindow* window = nullptr;
    const RefinedPrompt* refined = nullptr;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the assistant reply text. Throws Error{BackendError}.
    virtual std::string reply(const ChatRequest& request) = 0;
};

struct BackendConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env;  // name of the env var holding the key
};

/// OpenAI-style chat completions:
///   request  {"model": str, "messages": [{"role": str, "content": str}]}
///   response {"choices": [{"message": {"content": str}}]}
class HttpChatBackend final : public ChatBackend {
public:
    HttpChatBackend(BackendConfig config, int timeout_ms = 60000);
    std::string reply(const ChatRequest& request) override;

    std::string endpoint() const;
    static std::string request_body(const std::string& model, const std::vector<ChatMessage>& messages);
    /// Pulls choices[0].message.content out of a reply body.
    static std::string parse_reply(std::string_view body);

private:
    BackendConfig config_;
    int timeout_ms_;
};

/// First sentence of the top-ranked item:
///   "ANSWER: <sentence> [<tag>]", or "ANSWER: no context available".
std::string mock_reply(const ContextWindow& window);

class MockBackend final : public ChatBackend {
public:
    std::string reply(const ChatRequest& request) override;
};

/// Text up to and including the first '.', '!' or '?' that ends the text or is
/// followed by whitespace. Whitespace is collapsed first.
std::string first_sentence(std::string_view text);

/// Distinct `[n]` tags in order of first appearance.
std::vector<int> extract_tags(std::string_view text);

inline constexpr std::string_view kMockBackendId = "mock";

class Generator {
public:
    /// Starts with the built-in "mock" backend registered.
    explicit Generator(std::size_t max_in_flight = 4);

    void add_backend(const std::string& id, std::shared_ptr<ChatBackend> backend, std::string model = {});
    bool has_backend(const std::string& id) const;
    std::vector<std::string> backend_ids() const;

    /// System message (instructions + rendered context), then history turns,
    /// then the refined prompt as the user message. latency_ms runs from
    /// `started` (default: now) to reply parsed.
    AgentResponse complete(const ContextWindow& window, const RefinedPrompt& refined, const std::string& backend_id,
                           std::optional<std::chrono::steady_clock::time_point> started = std::nullopt);

    static std::vector<ChatMessage> build_messages(const ContextWindow& window, const RefinedPrompt& refined);

private:
    struct Entry {
        std::shared_ptr<ChatBackend> backend;
        std::string model;
        std::unique_ptr<InFlightLimit> in_flight;
    };
    std::size_t max_in_flight_;
    std::map<std::string, Entry> backends_;
};

/// Runs `complete` against the mock backend.
AgentResponse mock_complete(const ContextWindow& window, const RefinedPrompt& refined);

}  // namespace finagent
