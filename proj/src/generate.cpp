#include "finagent/generate.hpp"

#include "finagent/error.hpp"
#include "finagent/http.hpp"
#include "finagent/text.hpp"

#include <cctype>
#include <cstdlib>

#include <fmt/format.h>
#include <json.hpp>

namespace finagent {

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

std::string first_sentence(std::string_view text) {
    auto flat = collapse_whitespace(text);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        char c = flat[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == flat.size() || flat[i + 1] == ' ')) {
            return flat.substr(0, i + 1);
        }
    }
    return flat;
}

std::vector<int> extract_tags(std::string_view text) {
    std::vector<int> tags;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '[') continue;
        std::size_t j = i + 1;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j == i + 1 || j >= text.size() || text[j] != ']' || j - i - 1 > 6) continue;
        int tag = std::stoi(std::string(text.substr(i + 1, j - i - 1)));
        if (std::find(tags.begin(), tags.end(), tag) == tags.end()) tags.push_back(tag);
        i = j;
    }
    return tags;
}

std::string mock_reply(const ContextWindow& window) {
    if (window.items.empty()) return "ANSWER: no context available";
    const auto& top = window.items.front();
    return fmt::format("ANSWER: {} [{}]", first_sentence(top.item.text), top.tag);
}

std::string MockBackend::reply(const ChatRequest& request) {
    if (!request.window) return "ANSWER: no context available";
    return mock_reply(*request.window);
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

HttpChatBackend::HttpChatBackend(BackendConfig config, int timeout_ms)
    : config_(std::move(config)), timeout_ms_(timeout_ms) {
    if (!is_absolute_url(config_.base_url)) {
        throw Error(ErrorCode::ConfigError, fmt::format("backend base_url '{}' is not an absolute URL", config_.base_url));
    }
}

std::string HttpChatBackend::endpoint() const {
    std::string url = config_.base_url;
    if (url.ends_with("/chat/completions")) return url;
    while (!url.empty() && url.back() == '/') url.pop_back();
    return url + "/chat/completions";
}

std::string HttpChatBackend::request_body(const std::string& model, const std::vector<ChatMessage>& messages) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return nlohmann::json{{"model", model}, {"messages", msgs}}.dump();
}

std::string HttpChatBackend::parse_reply(std::string_view body) {
    try {
        auto j = nlohmann::json::parse(body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (!content.is_string()) throw Error(ErrorCode::BackendError, "choices[0].message.content is not a string");
        return content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BackendError, fmt::format("malformed backend reply: {}", e.what()));
    }
}

std::string HttpChatBackend::reply(const ChatRequest& request) {
    http::Headers headers{{"Accept", "application/json"}};
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", fmt::format("Bearer {}", key));
        }
    }
    auto model = request.model.empty() ? config_.model : request.model;
    http::Response res;
    try {
        res = http::post(endpoint(), request_body(model, request.messages), "application/json", timeout_ms_, headers);
    } catch (const Error& e) {
        throw Error(ErrorCode::BackendError, fmt::format("backend unreachable: {}", e.what()));
    }
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorCode::BackendError, fmt::format("backend returned HTTP {}", res.status));
    }
    return parse_reply(res.body);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

Generator::Generator(std::size_t max_in_flight) : max_in_flight_(std::max<std::size_t>(1, max_in_flight)) {
    add_backend(std::string(kMockBackendId), std::make_shared<MockBackend>(), "mock");
}

void Generator::add_backend(const std::string& id, std::shared_ptr<ChatBackend> backend, std::string model) {
    if (!backend) throw Error(ErrorCode::InvalidArgument, "null backend");
    Entry e;
    e.backend = std::move(backend);
    e.model = std::move(model);
    e.in_flight = std::make_unique<InFlightLimit>(static_cast<std::ptrdiff_t>(max_in_flight_));
    backends_[id] = std::move(e);
}

bool Generator::has_backend(const std::string& id) const { return backends_.contains(id); }

std::vector<std::string> Generator::backend_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : backends_) ids.push_back(id);
    return ids;
}

std::vector<ChatMessage> Generator::build_messages(const ContextWindow& window, const RefinedPrompt& refined) {
    std::vector<ChatMessage> msgs;
    std::string system =
        "You are a financial search assistant. Answer from the numbered sources below and cite them by tag, "
        "e.g. [1].";
    if (window.context_text.empty()) {
        system += "\n\nNo retrieved sources are available.";
    } else {
        system += "\n\n" + window.context_text;
    }
    msgs.push_back({Role::System, std::move(system)});
    for (const auto& t : window.history) {
        if (!t.query.empty()) msgs.push_back({Role::User, t.query});
        if (!t.response.empty()) msgs.push_back({Role::Assistant, t.response});
    }
    msgs.push_back({Role::User, refined.refined});
    return msgs;
}

AgentResponse Generator::complete(const ContextWindow& window, const RefinedPrompt& refined,
                                  const std::string& backend_id,
                                  std::optional<std::chrono::steady_clock::time_point> started) {
    auto t0 = started.value_or(std::chrono::steady_clock::now());
    auto it = backends_.find(backend_id);
    if (it == backends_.end()) {
        throw Error(ErrorCode::BackendError, fmt::format("no backend configured with id '{}'", backend_id));
    }
    if (window.token_count() > window.budget_tokens) {
        throw Error(ErrorCode::BudgetExceeded, fmt::format("context window holds {} tokens, budget is {}",
                                                           window.token_count(), window.budget_tokens));
    }
    ChatRequest req;
    req.model = it->second.model;
    req.messages = build_messages(window, refined);
    req.window = &window;
    req.refined = &refined;

    std::string text;
    {
        InFlightGuard guard(*it->second.in_flight);
        try {
            text = it->second.backend->reply(req);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::BackendError) throw;
            throw Error(ErrorCode::BackendError, e.what());
        } catch (const std::exception& e) {
            throw Error(ErrorCode::BackendError, e.what());
        }
    }

    AgentResponse resp;
    resp.response_id = make_id("r");
    resp.backend_id = backend_id;
    resp.prompt = refined.original;
    for (int tag : extract_tags(text)) {
        if (const auto* p = window.find_tag(tag)) {
            resp.sources_used.push_back(p->item.source);
            resp.cited_tags.push_back(tag);
        } else {
            resp.diagnostics.push_back(fmt::format("reply cites unknown source tag [{}]", tag));
        }
    }
    resp.text = std::move(text);
    resp.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return resp;
}

AgentResponse mock_complete(const ContextWindow& window, const RefinedPrompt& refined) {
    static Generator generator;
    return generator.complete(window, refined, std::string(kMockBackendId));
}

}  // namespace finagent
