#include <doctest.h>

#include <cstdlib>

#include <json.hpp>

#include "finagent/error.hpp"
#include "finagent/generate.hpp"
#include "finagent/text.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"

using namespace finagent;

namespace {

ContextWindow window_of(const std::vector<std::string>& texts) {
    std::vector<ContextItem> items;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        ContextItem it;
        it.text = texts[i];
        it.source = {"s" + std::to_string(i), SourceKind::PreferredUrl, "https://s.test/" + std::to_string(i),
                     std::nullopt, {}};
        it.content_hash = fnv1a64(texts[i]);
        items.push_back(it);
    }
    return pack_context(items, {}, 8000);
}

}  // namespace

TEST_CASE("mock rule") {
    auto w = window_of({"Fed holds rates. Markets rise."});
    CHECK(mock_reply(w) == "ANSWER: Fed holds rates. [1]");
    CHECK(mock_reply(window_of({})) == "ANSWER: no context available");
    CHECK(first_sentence("  GDP   grew 2.1%. Next") == "GDP grew 2.1%.");
    CHECK(first_sentence("U.S. GDP grew.") == "U.S.");  // the rule is purely lexical
    CHECK(first_sentence("no terminator") == "no terminator");
}

TEST_CASE("mock completion cites the top item") {
    auto w = window_of({"Tim Cook is Apple's CEO. He took over in 2011.", "Other text."});
    auto refined = refine_query("Who is Apple's CEO?", w.items);
    auto a = mock_complete(w, refined);
    auto b = mock_complete(w, refined);
    CHECK(a.text.find("Tim Cook") != std::string::npos);
    CHECK(a.cited_tags == std::vector<int>{1});
    REQUIRE(a.sources_used.size() == 1);
    CHECK(a.sources_used[0].uri == "https://s.test/0");
    CHECK(a.text == b.text);
    CHECK(a.response_id != b.response_id);
    CHECK(a.prompt == "Who is Apple's CEO?");
    CHECK(a.latency_ms > 0.0);
}

TEST_CASE("invalid tags become diagnostics") {
    struct Fixed final : ChatBackend {
        std::string reply(const ChatRequest&) override { return "See [2] and [9] and [2]."; }
    };
    Generator g;
    g.add_backend("fixed", std::make_shared<Fixed>());
    auto w = window_of({"a", "b", "c"});
    auto resp = g.complete(w, refine_query("q", w.items), "fixed");
    CHECK(resp.cited_tags == std::vector<int>{2});
    CHECK(resp.sources_used.size() == 1);
    REQUIRE(resp.diagnostics.size() == 1);
    CHECK(resp.diagnostics[0].find("[9]") != std::string::npos);
    CHECK(extract_tags("[1][x] [12] [1]") == std::vector<int>{1, 12});
}

TEST_CASE("messages carry context, history and the refined prompt") {
    std::vector<ContextItem> items(1);
    items[0].text = "ctx";
    items[0].source.uri = "https://c.test";
    auto w = pack_context(items, {{"earlier q", "earlier a"}}, 8000);
    auto refined = refine_query("now?", w.items);
    auto msgs = Generator::build_messages(w, refined);
    REQUIRE(msgs.size() == 4);
    CHECK(msgs[0].role == Role::System);
    CHECK(msgs[0].content.find("[1] https://c.test\nctx") != std::string::npos);
    CHECK(msgs[1].role == Role::User);
    CHECK(msgs[1].content == "earlier q");
    CHECK(msgs[2].role == Role::Assistant);
    CHECK(msgs[3].content == refined.refined);
}

TEST_CASE("unknown backend and budget violations") {
    Generator g;
    auto w = window_of({"x"});
    auto r = refine_query("q", w.items);
    CHECK_THROWS_AS(g.complete(w, r, "nope"), Error);
    w.budget_tokens = 1;  // pretend the window was built for a smaller budget
    try {
        g.complete(w, r, "mock");
        FAIL("expected BudgetExceeded");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BudgetExceeded);
    }
}

TEST_CASE("http chat backend speaks the chat-completions shape") {
    nlohmann::json seen;
    std::string auth;
    testsupport::StubServer server([&](const testsupport::StubRequest& r) -> testsupport::StubReply {
        if (r.path == "/fail/chat/completions") return {500, "text/plain", "boom"};
        seen = nlohmann::json::parse(r.body);
        auth = r.authorization;
        return {200, "application/json", R"({"choices":[{"message":{"role":"assistant","content":"Rates held [1]."}}]})"};
    });
    setenv("FINAGENT_TEST_KEY", "sekret", 1);
    Generator g;
    g.add_backend("remote", std::make_shared<HttpChatBackend>(BackendConfig{server.url("/v1"), "gpt-x", "FINAGENT_TEST_KEY"}),
                  "gpt-x");
    auto w = window_of({"Rates held steady."});
    auto resp = g.complete(w, refine_query("rates?", w.items), "remote");
    CHECK(resp.text == "Rates held [1].");
    CHECK(resp.cited_tags == std::vector<int>{1});
    CHECK(seen["model"] == "gpt-x");
    REQUIRE(seen["messages"].size() == 2);
    CHECK(seen["messages"][0]["role"] == "system");
    CHECK(seen["messages"][1]["role"] == "user");
    CHECK(auth == "Bearer sekret");

    g.add_backend("broken", std::make_shared<HttpChatBackend>(BackendConfig{server.url("/fail"), "m", ""}));
    try {
        g.complete(w, refine_query("rates?", w.items), "broken");
        FAIL("expected BackendError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::BackendError);
    }
    CHECK_THROWS_AS(HttpChatBackend::parse_reply(R"({"choices":[]})"), Error);
    CHECK(HttpChatBackend({"http://h/v1/chat/completions", "m", ""}).endpoint() == "http://h/v1/chat/completions");
}
