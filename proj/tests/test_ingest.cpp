#include <doctest.h>

#include <fstream>
#include <random>

#include "finagent/error.hpp"
#include "finagent/ingest.hpp"
#include "finagent/text.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"

using namespace finagent;
using testsupport::FixturePages;
using testsupport::TempDir;

namespace {

void write_file(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("fetch_url over HTTP normalizes html") {
    testsupport::StubServer server([](const testsupport::StubRequest& r) -> testsupport::StubReply {
        if (r.path == "/rates") return {200, "text/html", "<html><body><h1>Rates</h1><p>Fed holds.</p></body></html>"};
        if (r.path == "/empty") return {200, "text/html", "<body></body>"};
        if (r.path == "/bin") return {200, "application/octet-stream", std::string("\x00\x01\x02", 3)};
        if (r.path == "/plain") return {200, "text/plain", "  plain words  "};
        return {404, "text/plain", "nope"};
    });
    HttpPageSource pages;
    auto doc = fetch_url(pages, server.url("/rates"), 5000);
    CHECK(doc.text == "# Rates\n\nFed holds.");
    CHECK(doc.source.kind == SourceKind::PreferredUrl);
    CHECK(doc.source.uri == server.url("/rates"));
    CHECK(to_millis(doc.source.fetched_at) > 0);
    CHECK(doc.content_hash == fnv1a64(doc.text));

    CHECK(code_of([&] { fetch_url(pages, server.url("/missing"), 5000); }) == ErrorCode::NetworkError);
    CHECK(code_of([&] { fetch_url(pages, server.url("/empty"), 5000); }) == ErrorCode::EmptyContent);
    CHECK(code_of([&] { fetch_url(pages, server.url("/bin"), 5000); }) == ErrorCode::NotText);
    CHECK(fetch_url(pages, server.url("/plain"), 5000).text == "plain words");
    // nothing listening
    CHECK(code_of([&] { fetch_url(pages, "http://127.0.0.1:1/x", 500); }) == ErrorCode::NetworkError);
}

TEST_CASE("normalize_html strips boilerplate and keeps structure") {
    auto page = normalize_html(
        "<html><head><title>Q3 &amp; outlook</title><style>p{}</style></head><body>"
        "<nav><a href='/'>Home</a></nav><script>var x = '<p>';</script>"
        "<h2>Outlook</h2><p>See <a href=\"https://x.test/r\">the report</a> &mdash; now.</p>"
        "<ul><li>one</li><li>two</li></ul></body></html>");
    CHECK(page.title == std::optional<std::string>("Q3 & outlook"));
    CHECK(page.text == "## Outlook\n\nSee [the report](https://x.test/r) \xe2\x80\x94 now.\n\n- one\n\n- two");
    // double-encoded entities decode once
    CHECK(normalize_html("<p>&amp;lt;</p>").text == "&lt;");
}

TEST_CASE("caching fetcher reuses documents within the ttl") {
    FixturePages pages;
    pages.html("https://a.test/", "<p>alpha</p>");
    CachingFetcher f(pages, std::chrono::seconds(60));
    auto d1 = f.fetch("https://a.test/", 1000, SourceKind::PreferredUrl);
    auto d2 = f.fetch("https://a.test/", 1000, SourceKind::PreferredUrl);
    CHECK(d1.text == d2.text);
    CHECK(pages.hits("https://a.test/") == 1);
    f.clear();
    f.fetch("https://a.test/", 1000, SourceKind::PreferredUrl);
    CHECK(pages.hits("https://a.test/") == 2);
}

TEST_CASE("web_search keeps provider rank and skips failures") {
    FixturePages pages;
    std::vector<SearchResult> five;
    for (int i = 1; i <= 5; ++i) {
        auto url = "https://w.test/" + std::to_string(i);
        pages.html(url, "<p>page " + std::to_string(i) + "</p>");
        five.push_back({url, "t" + std::to_string(i)});
    }
    FixtureSearchProvider all(std::map<std::string, std::vector<SearchResult>>{{"*", five}});
    auto out = web_search(all, pages, "q", 5);
    REQUIRE(out.documents.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(out.documents[i].text == "page " + std::to_string(i + 1));
        CHECK(out.documents[i].source.kind == SourceKind::WebSearch);
    }
    CHECK(web_search(all, pages, "q", 2).documents.size() == 2);

    FixtureSearchProvider none(std::map<std::string, std::vector<SearchResult>>{{"*", {}}});
    CHECK(web_search(none, pages, "q", 5).documents.empty());

    FixtureSearchProvider three(std::map<std::string, std::vector<SearchResult>>{{"*", {{"https://w.test/1", ""}, {"https://w.test/404", ""}, {"https://w.test/3", ""}}}});
    auto partial = web_search(three, pages, "q", 5);
    REQUIRE(partial.documents.size() == 2);
    CHECK(partial.documents[0].source.uri == "https://w.test/1");
    CHECK(partial.documents[1].source.uri == "https://w.test/3");
    CHECK(partial.diagnostics.size() == 1);
}

TEST_CASE("http search provider substitutes the query") {
    testsupport::StubServer server([](const testsupport::StubRequest& r) -> testsupport::StubReply {
        if (r.query != "q=fed%20rates") return {400, "text/plain", r.query};
        return {200, "application/json", R"([{"url":"https://a.test/","title":"A"}])"};
    });
    HttpSearchProvider p(server.url("/search?q={query}"));
    auto res = p.search("fed rates", 5);
    REQUIRE(res.size() == 1);
    CHECK(res[0].url == "https://a.test/");
    CHECK(res[0].title == "A");
}

TEST_CASE("local files") {
    TempDir dir;
    write_file(dir / "notes.md", "hello");
    write_file(dir / "q.csv", "a,b\n1,2");
    write_file(dir / "report.pdf", "%PDF");
    write_file(dir / "quoted.csv", "name,note\n\"Smith, J\",\"a|b\"\nx");

    auto md = parse_local_file(dir / "notes.md");
    CHECK(md.text == "hello");
    CHECK(md.source.kind == SourceKind::LocalFile);
    CHECK(parse_local_file(dir / "q.csv").text == "| a | b |\n| --- | --- |\n| 1 | 2 |");
    CHECK(parse_local_file(dir / "quoted.csv").text ==
          "| name | note |\n| --- | --- |\n| Smith, J | a\\|b |\n| x |  |");
    CHECK(code_of([&] { parse_local_file(dir / "report.pdf"); }) == ErrorCode::UnsupportedFormat);
    CHECK(code_of([&] { parse_local_file(dir / "absent.md"); }) == ErrorCode::FileNotFound);

    ConverterMap conv{{"pdf", "printf '# converted\\n\\nfrom '; cat"}};
    CHECK(parse_local_file(dir / "report.pdf", conv).text == "# converted\n\nfrom %PDF");
    ConverterMap broken{{"pdf", "false"}};
    CHECK(code_of([&] { parse_local_file(dir / "report.pdf", broken); }) == ErrorCode::ConverterFailed);
}

TEST_CASE("chunk windows") {
    auto doc = make_document({"d", SourceKind::LocalFile, "file:///d", std::nullopt, {}},
                             "t0 t1 t2 t3 t4 t5 t6 t7 t8 t9");
    auto chunks = chunk_document(doc, 4, 1);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].token_begin == 0);
    CHECK(chunks[0].token_end == 4);
    CHECK(chunks[1].token_begin == 3);
    CHECK(chunks[1].token_end == 7);
    CHECK(chunks[2].token_begin == 6);
    CHECK(chunks[2].token_end == 10);
    CHECK(chunks[2].text == "t6 t7 t8 t9");

    auto small = make_document({}, "one two three");
    auto one = chunk_document(small, 256, 32);
    REQUIRE(one.size() == 1);
    CHECK(one[0].token_count == 3);
    CHECK(one[0].text == "one two three");

    auto eight = make_document({}, "a b c d e f g h");
    auto tiled = chunk_document(eight, 4, 0);
    REQUIRE(tiled.size() == 2);
    CHECK(tiled[0].token_count == 4);
    CHECK(tiled[1].token_count == 4);
    CHECK(tiled[0].text + tiled[1].text == eight.text);

    CHECK_THROWS_AS(chunk_document(eight, 4, 4), Error);
    CHECK_THROWS_AS(chunk_document(eight, 0, 0), Error);
    CHECK_THROWS_AS(make_document({}, "   "), Error);
}

TEST_CASE("chunks reconstruct the document when overlaps are stripped") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        int n = 1 + static_cast<int>(rng() % 60);
        for (int i = 0; i < n; ++i) {
            text += "w" + std::to_string(rng() % 100);
            text += (rng() % 4 == 0) ? ".\n" : " ";
        }
        auto doc = make_document({}, text);
        std::size_t size = 1 + rng() % 10;
        std::size_t overlap = rng() % size;
        auto chunks = chunk_document(doc, size, overlap);
        std::string rebuilt;
        std::size_t covered = 0;
        for (const auto& c : chunks) {
            CHECK(c.token_count <= size);
            CHECK(c.char_begin <= covered);
            rebuilt += doc.text.substr(covered, c.char_end - covered);
            covered = c.char_end;
            CHECK(doc.text.substr(c.char_begin, c.char_end - c.char_begin) == c.text);
        }
        CHECK(rebuilt == doc.text);
    }
}
