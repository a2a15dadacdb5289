#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "finagent/embed.hpp"
#include "finagent/ingest.hpp"
#include "finagent/vecstore.hpp"

namespace finagent {

struct UserPreferences {
    std::vector<std::string> preferred_urls;
    std::vector<std::string> api_endpoints;  // URL templates with {query}
    std::vector<std::string> local_paths;
    bool web_search_enabled = true;
    std::size_t k_web = kDefaultWebResults;

    friend bool operator==(const UserPreferences&, const UserPreferences&) = default;
};

/// Lower is more trusted; output is strictly ordered by tier.
enum class Tier : int { Preferred = 0, Local = 1, Web = 2, Store = 3 };

std::string_view to_string(Tier t) noexcept;
Tier tier_for(SourceKind kind) noexcept;

struct ContextItem {
    std::string text;
    SourceRef source;
    double score = 0.0;
    Tier tier = Tier::Preferred;
    std::uint64_t content_hash = 0;
    std::size_t order = 0;  // discovery order within the tier
};

struct GatherResult {
    std::vector<ContextItem> items;
    std::vector<std::string> diagnostics;
};

struct RetrievalConfig {
    std::size_t k_per_tier = 4;
    std::size_t chunk_tokens = kDefaultChunkTokens;
    std::size_t overlap_tokens = kDefaultOverlapTokens;
    int fetch_timeout_ms = 10000;
    std::size_t max_in_flight = kDefaultMaxInFlight;
    std::chrono::seconds source_ttl{300};
    bool store_tier_enabled = true;
    std::string store_collection = "corpus";
};

/// Gathers context tier by tier: preferred URLs and API endpoints, local
/// files, web search, then the vector store.
class Retriever {
public:
    /// `search` may be null, in which case the web tier reports a diagnostic
    /// whenever it is enabled.
    Retriever(PageSource& pages, SearchProvider* search, std::shared_ptr<const EmbeddingProvider> embedder,
              ConverterMap converters = {}, RetrievalConfig config = {});

    GatherResult gather_context(const std::string& query, const UserPreferences& prefs, const Store* store,
                                std::size_t k_per_tier) const;
    GatherResult gather_context(const std::string& query, const UserPreferences& prefs,
                                const Store* store) const {
        return gather_context(query, prefs, store, config_.k_per_tier);
    }

    const RetrievalConfig& config() const noexcept { return config_; }
    void clear_cache() { fetcher_->clear(); }

private:
    struct TierOutput {
        std::vector<ContextItem> candidates;
        std::vector<std::string> diagnostics;
    };
    TierOutput preferred_tier(const std::string& query, const UserPreferences& prefs) const;
    TierOutput local_tier(const std::string& query, const UserPreferences& prefs) const;
    TierOutput web_tier(const std::string& query, const UserPreferences& prefs) const;
    TierOutput store_tier(const std::string& query, const Store& store) const;
    void add_chunks(const Document& doc, Tier tier, const EmbeddingVector& qv, TierOutput& out) const;

    PageSource& pages_;
    SearchProvider* search_;
    std::shared_ptr<const EmbeddingProvider> embedder_;
    ConverterMap converters_;
    RetrievalConfig config_;
    std::unique_ptr<CachingFetcher> fetcher_;
};

/// Ranks each tier's candidates by score (ties by discovery order), keeps
/// the top k per tier after dropping same-tier duplicates, then removes
/// cross-tier duplicates keeping the lowest tier. Output is sorted by
/// (tier, score desc, order).
std::vector<ContextItem> select_context(std::vector<std::vector<ContextItem>> tiers, std::size_t k_per_tier);

/// `{query}` -> percent-encoded query, every occurrence.
std::string substitute_query(const std::string& url_template, const std::string& query);

// ---------------------------------------------------------------------------
// Context window packing
// ---------------------------------------------------------------------------

struct Turn {
    std::string query;
    std::string response;

    friend bool operator==(const Turn&, const Turn&) = default;
};

struct PackedItem {
    int tag = 0;  // 1-based
    ContextItem item;
};

inline constexpr std::size_t kDefaultBudgetTokens = 8000;
inline constexpr std::size_t kMinBudgetTokens = 64;

struct ContextWindow {
    std::vector<Turn> history;  // oldest first, after eviction
    std::vector<PackedItem> items;
    std::string context_text;   // rendered items, fed as the system message
    std::size_t history_tokens = 0;
    std::size_t context_tokens = 0;
    std::size_t budget_tokens = kDefaultBudgetTokens;

    std::size_t token_count() const noexcept { return history_tokens + context_tokens; }
    /// History followed by the rendered items.
    std::string rendered() const;
    const PackedItem* find_tag(int tag) const;
};

std::string render_turn(const Turn& turn);
/// `[n] <uri>` on the first line, then the item text.
std::string render_item(int tag, const ContextItem& item);

/// Greedy packing. History is charged first; if it exceeds half the budget
/// the oldest turns are dropped until it fits in half. Items are then added
/// in order until the next one would overflow the budget.
ContextWindow pack_context(const std::vector<ContextItem>& items, const std::vector<Turn>& history,
                           std::size_t budget_tokens = kDefaultBudgetTokens);

}  // namespace finagent
