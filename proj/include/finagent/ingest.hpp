#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finagent/http.hpp"
#include "finagent/source.hpp"

namespace finagent {

struct Document {
    SourceRef source;
    std::string text;
    std::uint64_t content_hash = 0;
};

struct Chunk {
    SourceRef doc_source;
    std::size_t seq = 0;
    std::string text;
    std::size_t token_count = 0;
    // token window [token_begin, token_end) and the byte range of `text` in
    // the parent document
    std::size_t token_begin = 0;
    std::size_t token_end = 0;
    std::size_t char_begin = 0;
    std::size_t char_end = 0;
};

/// Builds a Document, rejecting text that is empty after trimming.
Document make_document(SourceRef source, std::string text);

// ---------------------------------------------------------------------------
// HTML -> markdown-ish text
// ---------------------------------------------------------------------------

struct NormalizedPage {
    std::string text;
    std::optional<std::string> title;
};

/// Drops script/style/nav/head/noscript/template subtrees, renders h1-h6 as
/// `#` headings, anchors as `[text](href)`, list items as `- item`, and
/// separates block elements with a blank line. Entities are decoded and
/// inline whitespace collapsed.
NormalizedPage normalize_html(std::string_view html);

// ---------------------------------------------------------------------------
// Fetching
// ---------------------------------------------------------------------------

/// Where page bytes come from. The default goes over HTTP; tests plug in
/// in-memory fixtures.
class PageSource {
public:
    virtual ~PageSource() = default;
    virtual http::Response get(const std::string& url, int timeout_ms) = 0;
};

class HttpPageSource final : public PageSource {
public:
    http::Response get(const std::string& url, int timeout_ms) override;
};

/// Turns a raw HTTP response into a Document with the given provenance.
/// Non-2xx -> NetworkError, unconvertible content type -> NotText,
/// nothing left after normalisation -> EmptyContent.
Document document_from_response(const std::string& url, const http::Response& res, SourceKind kind);

Document fetch_url(PageSource& pages, const std::string& url, int timeout_ms,
                   SourceKind kind = SourceKind::PreferredUrl);

/// Per-URL document cache with a time-to-live, used for preferred sources.
class CachingFetcher {
public:
    CachingFetcher(PageSource& pages, std::chrono::seconds ttl) : pages_(pages), ttl_(ttl) {}

    Document fetch(const std::string& url, int timeout_ms, SourceKind kind);
    void clear();

private:
    PageSource& pages_;
    std::chrono::seconds ttl_;
    std::mutex mu_;
    std::map<std::pair<std::string, SourceKind>, std::pair<std::chrono::steady_clock::time_point, Document>> cache_;
};

// ---------------------------------------------------------------------------
// Web search
// ---------------------------------------------------------------------------

struct SearchResult {
    std::string url;
    std::string title;
};

class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    /// Ranked result URLs, best first. Throws Error{ProviderError}.
    virtual std::vector<SearchResult> search(const std::string& query, std::size_t k) = 0;
};

/// GET a URL template with `{query}` percent-encoded in; expects a JSON array
/// of {url, title} objects.
class HttpSearchProvider final : public SearchProvider {
public:
    HttpSearchProvider(std::string url_template, int timeout_ms = 10000)
        : url_template_(std::move(url_template)), timeout_ms_(timeout_ms) {}
    std::vector<SearchResult> search(const std::string& query, std::size_t k) override;

private:
    std::string url_template_;
    int timeout_ms_;
};

/// Static results loaded from a JSON file: either an array of {url, title}
/// returned for every query, or an object keyed by query with an optional
/// "*" fallback entry.
class FixtureSearchProvider final : public SearchProvider {
public:
    explicit FixtureSearchProvider(const std::filesystem::path& path);
    explicit FixtureSearchProvider(std::map<std::string, std::vector<SearchResult>> by_query)
        : by_query_(std::move(by_query)) {}
    std::vector<SearchResult> search(const std::string& query, std::size_t k) override;

private:
    std::map<std::string, std::vector<SearchResult>> by_query_;
};

inline constexpr std::size_t kDefaultWebResults = 5;
inline constexpr std::size_t kDefaultMaxInFlight = 4;

struct WebSearchOutcome {
    std::vector<Document> documents;
    std::vector<std::string> diagnostics;  // skipped URLs and why
};

/// Fetches the provider's top-k URLs (bounded concurrency) and keeps the ones
/// that convert, in provider rank order.
WebSearchOutcome web_search(SearchProvider& provider, PageSource& pages, const std::string& query,
                            std::size_t k = kDefaultWebResults, int timeout_ms = 10000,
                            std::size_t max_in_flight = kDefaultMaxInFlight);

// ---------------------------------------------------------------------------
// Local files
// ---------------------------------------------------------------------------

/// Maps lowercased extensions (no dot) to converter commands. The command is
/// run with the file path as its only argument and must print markdown.
using ConverterMap = std::map<std::string, std::string>;

Document parse_local_file(const std::filesystem::path& path, const ConverterMap& converters = {});

/// `a,b\n1,2` -> `| a | b |\n| --- | --- |\n| 1 | 2 |`. Quoted fields follow RFC 4180.
std::string csv_to_markdown(std::string_view csv);

// ---------------------------------------------------------------------------
// Chunking
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultChunkTokens = 256;
inline constexpr std::size_t kDefaultOverlapTokens = 32;

/// Sliding token window with stride chunk_tokens - overlap_tokens. Chunk
/// texts are byte ranges of the document: the first starts at 0, the last
/// ends at text.size(), and chunk i ends where its final window token's
/// successor begins, so stripping overlaps reconstructs the document.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t chunk_tokens = kDefaultChunkTokens,
                                  std::size_t overlap_tokens = kDefaultOverlapTokens);

}  // namespace finagent
