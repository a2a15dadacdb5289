#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include "finagent/error.hpp"
#include "finagent/prompt.hpp"
#include "finagent/retrieve.hpp"
#include "finagent/text.hpp"
#include "support/fixtures.hpp"

using namespace finagent;
using testsupport::FixturePages;
using testsupport::TempDir;

namespace {

std::shared_ptr<const EmbeddingProvider> ref() { return std::make_shared<ReferenceEmbedder>(); }

std::string words(const std::string& stem, int n) {
    std::string s;
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + stem + std::to_string(i);
    return s;
}

ContextItem item(const std::string& uri, const std::string& text, Tier tier = Tier::Preferred) {
    ContextItem it;
    it.text = text;
    it.source.uri = uri;
    it.tier = tier;
    it.content_hash = fnv1a64(text);
    return it;
}

using ProviderMap = std::map<std::string, std::vector<SearchResult>>;

}  // namespace

TEST_CASE("preferred copy survives dedup against an identical web page") {
    FixturePages pages;
    pages.html("https://pref.test/ceo", "<p>Tim Cook is Apple's CEO.</p>");
    pages.html("https://web.test/ceo", "<p>Tim Cook is Apple's CEO.</p>");
    FixtureSearchProvider search(ProviderMap{{"*", {{"https://web.test/ceo", "dup"}}}});
    Retriever r(pages, &search, ref());
    UserPreferences prefs;
    prefs.preferred_urls = {"https://pref.test/ceo"};
    auto out = r.gather_context("who is apple's ceo", prefs, nullptr);
    REQUIRE(out.items.size() == 1);
    CHECK(out.items[0].tier == Tier::Preferred);
    CHECK(out.items[0].source.uri == "https://pref.test/ceo");
    CHECK(out.items[0].source.kind == SourceKind::PreferredUrl);
}

TEST_CASE("nothing configured gives an empty context") {
    FixturePages pages;
    Retriever r(pages, nullptr, ref());
    UserPreferences prefs;
    prefs.web_search_enabled = false;
    auto store = Store::in_memory(ref());
    auto out = r.gather_context("anything", prefs, &store);
    CHECK(out.items.empty());
}

TEST_CASE("two tiers of three chunks with k=2 give tiers 0,0,2,2") {
    FixturePages pages;
    pages.html("https://pref.test/", "<p>fed rates hold. alpha beta gamma. delta epsilon zeta.</p>");
    pages.html("https://web.test/", "<p>fed rates rise. eta theta iota. kappa lambda mu.</p>");
    FixtureSearchProvider search(ProviderMap{{"*", {{"https://web.test/", "w"}}}});
    RetrievalConfig cfg;
    cfg.chunk_tokens = 3;
    cfg.overlap_tokens = 0;
    Retriever r(pages, &search, ref(), {}, cfg);
    UserPreferences prefs;
    prefs.preferred_urls = {"https://pref.test/"};
    auto out = r.gather_context("fed rates", prefs, nullptr, 2);
    REQUIRE(out.items.size() == 4);
    CHECK(out.items[0].tier == Tier::Preferred);
    CHECK(out.items[1].tier == Tier::Preferred);
    CHECK(out.items[2].tier == Tier::Web);
    CHECK(out.items[3].tier == Tier::Web);
    // the chunk that shares the query terms ranks first inside its tier
    CHECK(out.items[0].text.starts_with("fed rates hold"));
    CHECK(out.items[2].text.starts_with("fed rates rise"));
    CHECK(out.items[0].score >= out.items[1].score);
}

TEST_CASE("api endpoints get the query substituted") {
    FixturePages pages;
    pages.set("https://api.test/q?s=fed%20rates", {200, "application/json", R"({"rate": "5.25%"})"});
    Retriever r(pages, nullptr, ref());
    UserPreferences prefs;
    prefs.web_search_enabled = false;
    prefs.api_endpoints = {"https://api.test/q?s={query}"};
    auto out = r.gather_context("fed rates", prefs, nullptr);
    REQUIRE(out.items.size() == 1);
    CHECK(out.items[0].text.find("5.25%") != std::string::npos);
    CHECK(substitute_query("x/{query}/{query}", "a b") == "x/a%20b/a%20b");
}

TEST_CASE("tier failures become diagnostics") {
    FixturePages pages;
    pages.html("https://ok.test/", "<p>fine</p>");
    Retriever r(pages, nullptr, ref());
    UserPreferences prefs;
    prefs.preferred_urls = {"https://down.test/", "https://ok.test/"};
    prefs.local_paths = {"/definitely/not/here.md"};
    prefs.web_search_enabled = true;  // but no provider configured
    auto out = r.gather_context("fine", prefs, nullptr);
    REQUIRE(out.items.size() == 1);
    CHECK(out.items[0].source.uri == "https://ok.test/");
    CHECK(out.diagnostics.size() >= 3);
}

TEST_CASE("local and store tiers") {
    TempDir dir;
    std::ofstream(dir / "memo.md") << "Quarterly income rose 12 percent.";
    FixturePages pages;
    Retriever r(pages, nullptr, ref());
    auto store = Store::open(dir / "store", ref());
    store.insert("corpus", "Income guidance for next quarter is flat.", {"x", SourceKind::StoreRecord, "mem://1", std::nullopt, {}},
                 RecordKind::Corpus);
    UserPreferences prefs;
    prefs.web_search_enabled = false;
    prefs.local_paths = {(dir / "memo.md").string()};
    auto out = r.gather_context("quarterly income", prefs, &store);
    REQUIRE(out.items.size() == 2);
    CHECK(out.items[0].tier == Tier::Local);
    CHECK(out.items[0].source.kind == SourceKind::LocalFile);
    CHECK(out.items[1].tier == Tier::Store);
    CHECK(out.items[1].source.kind == SourceKind::StoreRecord);
    CHECK(out.items[1].source.uri == "mem://1");
}

TEST_CASE("select_context invariants on random candidates") {
    std::mt19937 rng(17);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<std::vector<ContextItem>> tiers(4);
        for (int t = 0; t < 4; ++t) {
            int n = static_cast<int>(rng() % 6);
            for (int i = 0; i < n; ++i) {
                auto it = item("u", "text" + std::to_string(rng() % 8), static_cast<Tier>(t));
                it.score = static_cast<double>(rng() % 5) / 4.0;
                it.order = static_cast<std::size_t>(i);
                tiers[t].push_back(it);
            }
        }
        std::size_t k = 1 + rng() % 4;
        auto out = select_context(tiers, k);
        auto bigger = select_context(tiers, k + 1);
        std::set<std::uint64_t> hashes;
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(hashes.insert(out[i].content_hash).second);
            if (i) CHECK(static_cast<int>(out[i - 1].tier) <= static_cast<int>(out[i].tier));
        }
        // every hash kept at k is still kept at k+1, in the same or a more trusted tier
        for (const auto& a : out) {
            bool found = false;
            for (const auto& b : bigger) {
                if (b.content_hash == a.content_hash && b.tier <= a.tier) found = true;
            }
            CHECK(found);
        }
    }
}

TEST_CASE("pack_context fits everything under budget") {
    std::vector<ContextItem> items = {item("https://a.test", "alpha beta"), item("https://b.test", "gamma")};
    auto w = pack_context(items, {}, 8000);
    REQUIRE(w.items.size() == 2);
    CHECK(w.items[0].tag == 1);
    CHECK(w.items[1].tag == 2);
    CHECK(w.context_text == "[1] https://a.test\nalpha beta\n\n[2] https://b.test\ngamma");
    CHECK(w.token_count() == count_tokens(w.rendered()));
    CHECK(w.find_tag(2)->item.text == "gamma");
    CHECK(w.find_tag(3) == nullptr);
}

TEST_CASE("pack_context stops at the first item that would overflow") {
    // two 40-token blocks against a 64-token budget: only the first fits
    std::vector<ContextItem> items = {item("https://a.test", words("a", 36)), item("https://b.test", words("b", 36))};
    REQUIRE(count_tokens(render_item(1, items[0])) == 40);
    auto w = pack_context(items, {}, 64);
    REQUIRE(w.items.size() == 1);
    CHECK(w.items[0].item.source.uri == "https://a.test");
    CHECK(w.token_count() == 40);
    CHECK_THROWS_AS(pack_context(items, {}, 10), Error);
}

TEST_CASE("pack_context evicts the oldest history beyond half the budget") {
    // each turn renders to 2 + 499 + 499 = 1000 tokens; 6 turns = 6000
    std::vector<Turn> history;
    for (int i = 0; i < 6; ++i) history.push_back({words("q" + std::to_string(i) + "x", 499), words("r", 499)});
    REQUIRE(count_tokens(render_turn(history[0])) == 1000);
    std::vector<ContextItem> items = {item("https://a.test", words("c", 100))};
    auto w = pack_context(items, history, 8000);
    REQUIRE(w.history.size() == 4);
    CHECK(w.history.front() == history[2]);
    CHECK(w.history_tokens == 4000);
    CHECK(w.items.size() == 1);
    CHECK(w.token_count() <= 8000);
}

TEST_CASE("refine_query") {
    std::vector<PackedItem> items = {{1, item("https://r.test/10q", "Q2 revenue 4.1B")},
                                     {2, item("https://n.test/ai", "AI demand strong")},
                                     {3, item("https://n.test/x", "x")}};
    std::string q = "Predict the next quarter's income for our company in the AI sector.";
    auto p = refine_query(q, items);
    CHECK(p.original == q);
    CHECK(p.refined.find(q) != std::string::npos);
    CHECK(p.refined.find("[1] [2] [3]") != std::string::npos);
    CHECK(p.refined.find("retrieved sources") != std::string::npos);
    CHECK(p.evidence_tags == std::vector<int>{1, 2, 3});
    CHECK(refine_query("plain", {}).refined == "plain");
    CHECK_THROWS_AS(refine_query("  ", {}), Error);

    auto rw = refine_query_rewrite("what now?", items, [](const std::string&) { return "Summarise [1]."; });
    CHECK(rw.refined == "Summarise [1].\n\nOriginal question: what now?");
    auto fallback = refine_query_rewrite("what now?", items, [](const std::string&) -> std::string { throw std::runtime_error("x"); });
    CHECK(fallback.refined == refine_query("what now?", items).refined);
}

TEST_CASE("sessions: clear, preferences, persistence") {
    TempDir dir;
    std::string id;
    UserPreferences prefs;
    prefs.preferred_urls = {"https://a.test/"};
    {
        SessionManager m(dir / "sessions.json");
        id = m.create();
        m.set_preferences(id, prefs);
        SourceRef s{"s1", SourceKind::PreferredUrl, "https://a.test/", std::nullopt, {}};
        for (int i = 0; i < 4; ++i) m.append_turn(id, {"q", "a"}, "r" + std::to_string(i), {{s, Tier::Preferred}});
        CHECK(m.get(id).turns.size() == 4);
        CHECK(m.get(id).sources.size() == 1);  // same source, deduplicated
        CHECK(m.owns_response(id, "r2"));
    }
    SessionManager m(dir / "sessions.json");
    REQUIRE(m.exists(id));
    CHECK(m.get(id).turns.size() == 4);
    auto cleared = m.clear(id);
    CHECK(cleared.turns.empty());
    CHECK(cleared.sources.empty());
    CHECK(cleared.preferences == prefs);
    CHECK(m.clear(id).turns.empty());
    try {
        m.clear("nope");
        FAIL("expected UnknownSession");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownSession);
    }
}
