#include "finagent/retrieve.hpp"

#include "finagent/concurrency.hpp"
#include "finagent/error.hpp"
#include "finagent/text.hpp"

#include <algorithm>
#include <future>
#include <unordered_set>

#include <fmt/format.h>

namespace finagent {

std::string_view to_string(Tier t) noexcept {
    switch (t) {
        case Tier::Preferred: return "preferred";
        case Tier::Local: return "local";
        case Tier::Web: return "web";
        case Tier::Store: return "store";
    }
    return "store";
}

Tier tier_for(SourceKind kind) noexcept {
    switch (kind) {
        case SourceKind::PreferredUrl: return Tier::Preferred;
        case SourceKind::LocalFile: return Tier::Local;
        case SourceKind::WebSearch: return Tier::Web;
        case SourceKind::StoreRecord: return Tier::Store;
    }
    return Tier::Store;
}

std::string substitute_query(const std::string& url_template, const std::string& query) {
    const std::string needle = "{query}";
    auto encoded = percent_encode(query);
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto hit = url_template.find(needle, pos);
        if (hit == std::string::npos) {
            out.append(url_template, pos);
            break;
        }
        out.append(url_template, pos, hit - pos);
        out += encoded;
        pos = hit + needle.size();
    }
    return out;
}

Retriever::Retriever(PageSource& pages, SearchProvider* search, std::shared_ptr<const EmbeddingProvider> embedder,
                     ConverterMap converters, RetrievalConfig config)
    : pages_(pages),
      search_(search),
      embedder_(std::move(embedder)),
      converters_(std::move(converters)),
      config_(std::move(config)),
      fetcher_(std::make_unique<CachingFetcher>(pages_, config_.source_ttl)) {
    if (!embedder_) throw Error(ErrorCode::InvalidArgument, "retriever needs an embedding provider");
}

// Whitespace-insensitive, so a chunk that differs from another only in line
// breaks or spacing still counts as the same content.
static std::uint64_t item_hash(std::string_view text) { return fnv1a64(collapse_whitespace(text)); }

void Retriever::add_chunks(const Document& doc, Tier tier, const EmbeddingVector& qv, TierOutput& out) const {
    for (auto& chunk : chunk_document(doc, config_.chunk_tokens, config_.overlap_tokens)) {
        ContextItem item;
        item.score = cosine(qv, embedder_->embed(chunk.text));
        item.content_hash = item_hash(chunk.text);
        item.text = std::move(chunk.text);
        item.source = doc.source;
        item.tier = tier;
        item.order = out.candidates.size();
        out.candidates.push_back(std::move(item));
    }
}

Retriever::TierOutput Retriever::preferred_tier(const std::string& query, const UserPreferences& prefs) const {
    TierOutput out;
    std::vector<std::string> urls = prefs.preferred_urls;
    for (const auto& tmpl : prefs.api_endpoints) urls.push_back(substitute_query(tmpl, query));
    if (urls.empty()) return out;

    struct Attempt {
        std::optional<Document> doc;
        std::string error;
    };
    auto attempts = bounded_parallel_map(urls.size(), config_.max_in_flight, [&](std::size_t i) {
        Attempt a;
        try {
            // API responses depend on the query, so only plain URLs are cached
            if (i < prefs.preferred_urls.size()) {
                a.doc = fetcher_->fetch(urls[i], config_.fetch_timeout_ms, SourceKind::PreferredUrl);
            } else {
                a.doc = fetch_url(pages_, urls[i], config_.fetch_timeout_ms, SourceKind::PreferredUrl);
            }
        } catch (const Error& e) {
            a.error = fmt::format("preferred: {}: {}: {}", urls[i], to_string(e.code()), e.what());
        } catch (const std::exception& e) {
            a.error = fmt::format("preferred: {}: {}", urls[i], e.what());
        }
        return a;
    });
    auto qv = embedder_->embed(query);
    for (auto& a : attempts) {
        if (a.doc) {
            add_chunks(*a.doc, Tier::Preferred, qv, out);
        } else {
            out.diagnostics.push_back(std::move(a.error));
        }
    }
    return out;
}

Retriever::TierOutput Retriever::local_tier(const std::string& query, const UserPreferences& prefs) const {
    TierOutput out;
    if (prefs.local_paths.empty()) return out;
    auto qv = embedder_->embed(query);
    for (const auto& path : prefs.local_paths) {
        try {
            auto doc = parse_local_file(path, converters_);
            add_chunks(doc, Tier::Local, qv, out);
        } catch (const Error& e) {
            out.diagnostics.push_back(fmt::format("local: {}: {}: {}", path, to_string(e.code()), e.what()));
        } catch (const std::exception& e) {
            out.diagnostics.push_back(fmt::format("local: {}: {}", path, e.what()));
        }
    }
    return out;
}

Retriever::TierOutput Retriever::web_tier(const std::string& query, const UserPreferences& prefs) const {
    TierOutput out;
    if (!prefs.web_search_enabled) return out;
    if (!search_) {
        out.diagnostics.emplace_back("web: no search provider configured");
        return out;
    }
    try {
        auto res = web_search(*search_, pages_, query, prefs.k_web, config_.fetch_timeout_ms, config_.max_in_flight);
        auto qv = embedder_->embed(query);
        for (const auto& doc : res.documents) add_chunks(doc, Tier::Web, qv, out);
        for (auto& d : res.diagnostics) out.diagnostics.push_back("web: " + d);
    } catch (const Error& e) {
        out.diagnostics.push_back(fmt::format("web: {}: {}", to_string(e.code()), e.what()));
    }
    return out;
}

Retriever::TierOutput Retriever::store_tier(const std::string& query, const Store& store) const {
    TierOutput out;
    const auto& collection = config_.store_collection;
    auto n = store.size(collection);
    if (n == 0) return out;
    try {
        auto qv = store.provider().embed(query);
        for (auto& hit : store.search(collection, qv, n)) {
            ContextItem item;
            item.score = hit.score;
            item.content_hash = item_hash(hit.payload_text);
            item.text = std::move(hit.payload_text);
            item.source.id = fmt::format("record:{}", hit.record_id);
            item.source.kind = SourceKind::StoreRecord;
            item.source.uri = hit.source.uri.empty() ? item.source.id : hit.source.uri;
            item.source.title = hit.source.title;
            item.source.fetched_at = hit.source.fetched_at;
            item.tier = Tier::Store;
            item.order = static_cast<std::size_t>(hit.record_id);
            out.candidates.push_back(std::move(item));
        }
    } catch (const Error& e) {
        out.diagnostics.push_back(fmt::format("store: {}: {}", to_string(e.code()), e.what()));
    }
    return out;
}

GatherResult Retriever::gather_context(const std::string& query, const UserPreferences& prefs, const Store* store,
                                       std::size_t k_per_tier) const {
    if (trim(query).empty()) throw Error(ErrorCode::InvalidArgument, "query is empty");
    if (k_per_tier == 0) throw Error(ErrorCode::InvalidArgument, "k_per_tier must be >= 1");
    if (prefs.k_web == 0) throw Error(ErrorCode::InvalidArgument, "k_web must be >= 1");

    // corpus tiers fetch concurrently; assembly below depends only on data
    bool has_preferred = !prefs.preferred_urls.empty() || !prefs.api_endpoints.empty();
    bool has_web = prefs.web_search_enabled && search_ != nullptr;
    std::vector<TierOutput> outputs;
    if (has_preferred && has_web) {
        auto web = std::async(std::launch::async, [&] { return web_tier(query, prefs); });
        outputs.push_back(preferred_tier(query, prefs));
        outputs.push_back(local_tier(query, prefs));
        outputs.push_back(web.get());
    } else {
        outputs.push_back(preferred_tier(query, prefs));
        outputs.push_back(local_tier(query, prefs));
        outputs.push_back(web_tier(query, prefs));
    }
    if (store && config_.store_tier_enabled) {
        outputs.push_back(store_tier(query, *store));
    } else {
        outputs.emplace_back();
    }

    GatherResult result;
    std::vector<std::vector<ContextItem>> tiers;
    for (auto& o : outputs) {
        tiers.push_back(std::move(o.candidates));
        for (auto& d : o.diagnostics) result.diagnostics.push_back(std::move(d));
    }
    result.items = select_context(std::move(tiers), k_per_tier);
    return result;
}

std::vector<ContextItem> select_context(std::vector<std::vector<ContextItem>> tiers, std::size_t k_per_tier) {
    auto ranked_before = [](const ContextItem& a, const ContextItem& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.order < b.order;
    };
    std::vector<ContextItem> out;
    std::unordered_set<std::uint64_t> kept;
    for (auto& tier : tiers) {
        std::stable_sort(tier.begin(), tier.end(), ranked_before);
        std::unordered_set<std::uint64_t> seen_here;
        std::vector<ContextItem> top;
        for (auto& item : tier) {
            if (top.size() >= k_per_tier) break;
            if (!seen_here.insert(item.content_hash).second) continue;
            top.push_back(std::move(item));
        }
        for (auto& item : top) {
            if (kept.contains(item.content_hash)) continue;
            kept.insert(item.content_hash);
            out.push_back(std::move(item));
        }
    }
    std::stable_sort(out.begin(), out.end(), [&](const ContextItem& a, const ContextItem& b) {
        if (a.tier != b.tier) return a.tier < b.tier;
        return ranked_before(a, b);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Packing
// ---------------------------------------------------------------------------

std::string render_turn(const Turn& turn) {
    return fmt::format("User: {}\nAssistant: {}", turn.query, turn.response);
}

std::string render_item(int tag, const ContextItem& item) {
    return fmt::format("[{}] {}\n{}", tag, item.source.uri, item.text);
}

std::string ContextWindow::rendered() const {
    std::string out;
    for (const auto& t : history) {
        if (!out.empty()) out += "\n\n";
        out += render_turn(t);
    }
    if (!context_text.empty()) {
        if (!out.empty()) out += "\n\n";
        out += context_text;
    }
    return out;
}

const PackedItem* ContextWindow::find_tag(int tag) const {
    for (const auto& p : items)
        if (p.tag == tag) return &p;
    return nullptr;
}

ContextWindow pack_context(const std::vector<ContextItem>& items, const std::vector<Turn>& history,
                           std::size_t budget_tokens) {
    if (budget_tokens < kMinBudgetTokens) {
        throw Error(ErrorCode::InvalidArgument,
                    fmt::format("budget_tokens must be >= {}, got {}", kMinBudgetTokens, budget_tokens));
    }
    ContextWindow w;
    w.budget_tokens = budget_tokens;

    std::vector<std::size_t> turn_cost;
    std::size_t history_total = 0;
    for (const auto& t : history) {
        turn_cost.push_back(count_tokens(render_turn(t)));
        history_total += turn_cost.back();
    }
    std::size_t first_kept = 0;
    const std::size_t history_cap = budget_tokens / 2;
    if (history_total > history_cap) {
        while (first_kept < history.size() && history_total > history_cap) {
            history_total -= turn_cost[first_kept];
            ++first_kept;
        }
    }
    w.history.assign(history.begin() + static_cast<std::ptrdiff_t>(first_kept), history.end());
    w.history_tokens = history_total;

    std::size_t used = w.history_tokens;
    for (const auto& item : items) {
        int tag = static_cast<int>(w.items.size()) + 1;
        auto block = render_item(tag, item);
        auto cost = count_tokens(block);
        if (used + cost > budget_tokens) break;
        used += cost;
        if (!w.context_text.empty()) w.context_text += "\n\n";
        w.context_text += block;
        w.context_tokens += cost;
        w.items.push_back({tag, item});
    }
    return w;
}

}  // namespace finagent
