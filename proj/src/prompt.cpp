#include "finagent/prompt.hpp"

#include "finagent/error.hpp"
#include "finagent/text.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

namespace finagent {

RefinedPrompt refine_query(const std::string& query, std::span<const PackedItem> items) {
    if (trim(query).empty()) throw Error(ErrorCode::InvalidArgument, "query is empty");
    RefinedPrompt p;
    p.original = query;
    if (items.empty()) {
        p.refined = query;
        return p;
    }
    std::string tags;
    for (const auto& it : items) {
        if (!tags.empty()) tags += ' ';
        tags += fmt::format("[{}]", it.tag);
        p.evidence_tags.push_back(it.tag);
    }
    p.refined = fmt::format(
        "Based on the following retrieved sources {}, and the conversation so far, answer precisely and cite "
        "source tags: {}",
        tags, query);
    return p;
}

RefinedPrompt refine_query_rewrite(const std::string& query, std::span<const PackedItem> items,
                                   const std::function<std::string(const std::string&)>& rewriter) {
    auto base = refine_query(query, items);
    if (!rewriter) return base;
    std::string rewritten;
    try {
        rewritten = trim(rewriter(base.refined));
    } catch (const std::exception&) {
        return base;
    }
    if (rewritten.empty()) return base;
    if (rewritten.find(query) == std::string::npos) rewritten += "\n\nOriginal question: " + query;
    base.refined = std::move(rewritten);
    return base;
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------
namespace {

nlohmann::json source_to_json(const SourceRef& s) {
    nlohmann::json j = {{"id", s.id}, {"kind", std::string(to_string(s.kind))}, {"uri", s.uri},
                        {"fetched_at", to_millis(s.fetched_at)}};
    if (s.title) j["title"] = *s.title;
    return j;
}

SourceRef source_from_json(const nlohmann::json& j) {
    SourceRef s;
    s.id = j.value("id", "");
    s.kind = source_kind_from_string(j.value("kind", "store_record")).value_or(SourceKind::StoreRecord);
    s.uri = j.value("uri", "");
    if (j.contains("title") && j["title"].is_string()) s.title = j["title"].get<std::string>();
    s.fetched_at = from_millis(j.value("fetched_at", std::int64_t{0}));
    return s;
}

nlohmann::json prefs_to_json(const UserPreferences& p) {
    return {{"preferred_urls", p.preferred_urls}, {"api_endpoints", p.api_endpoints},
            {"local_paths", p.local_paths},       {"web_search_enabled", p.web_search_enabled},
            {"k_web", p.k_web}};
}

UserPreferences prefs_from_json(const nlohmann::json& j, const UserPreferences& defaults) {
    UserPreferences p = defaults;
    p.preferred_urls = j.value("preferred_urls", p.preferred_urls);
    p.api_endpoints = j.value("api_endpoints", p.api_endpoints);
    p.local_paths = j.value("local_paths", p.local_paths);
    p.web_search_enabled = j.value("web_search_enabled", p.web_search_enabled);
    p.k_web = j.value("k_web", p.k_web);
    return p;
}

}  // namespace

SessionManager::SessionManager(std::optional<std::filesystem::path> snapshot_path, UserPreferences defaults)
    : path_(std::move(snapshot_path)), defaults_(std::move(defaults)) {
    load();
}

std::string SessionManager::create() {
    std::lock_guard lock(mu_);
    auto id = make_id("s");
    auto e = std::make_unique<Entry>();
    e->session.session_id = id;
    e->session.preferences = defaults_;
    e->session.created_at = now_utc();
    sessions_.emplace(id, std::move(e));
    save_locked();
    return id;
}

std::string SessionManager::ensure(const std::string& id) {
    if (id.empty()) return create();
    std::lock_guard lock(mu_);
    if (!sessions_.contains(id)) {
        auto e = std::make_unique<Entry>();
        e->session.session_id = id;
        e->session.preferences = defaults_;
        e->session.created_at = now_utc();
        sessions_.emplace(id, std::move(e));
        save_locked();
    }
    return id;
}

bool SessionManager::exists(const std::string& id) const {
    std::lock_guard lock(mu_);
    return sessions_.contains(id);
}

SessionManager::Entry& SessionManager::entry(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, fmt::format("unknown session '{}'", id));
    return *it->second;
}

const SessionManager::Entry& SessionManager::entry(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, fmt::format("unknown session '{}'", id));
    return *it->second;
}

Session SessionManager::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    return entry(id).session;
}

std::unique_lock<std::mutex> SessionManager::serialize(const std::string& id) {
    std::mutex* m;
    {
        std::lock_guard lock(mu_);
        m = &entry(id).request_mu;
    }
    // entries are never erased, so the mutex outlives the map lock
    return std::unique_lock<std::mutex>(*m);
}

void SessionManager::append_turn(const std::string& id, Turn turn, const std::string& response_id,
                                 const std::vector<SessionSource>& sources) {
    std::lock_guard lock(mu_);
    auto& s = entry(id).session;
    s.turns.push_back(std::move(turn));
    s.response_ids.push_back(response_id);
    for (const auto& src : sources) {
        bool seen = false;
        for (const auto& have : s.sources) {
            if (have.source.uri == src.source.uri && have.tier == src.tier) {
                seen = true;
                break;
            }
        }
        if (!seen) s.sources.push_back(src);
    }
    save_locked();
}

void SessionManager::set_preferences(const std::string& id, UserPreferences prefs) {
    std::lock_guard lock(mu_);
    entry(id).session.preferences = std::move(prefs);
    save_locked();
}

Session SessionManager::clear(const std::string& id) {
    std::lock_guard lock(mu_);
    auto& s = entry(id).session;
    s.turns.clear();
    s.sources.clear();
    s.response_ids.clear();
    save_locked();
    return s;
}

bool SessionManager::owns_response(const std::string& id, const std::string& response_id) const {
    std::lock_guard lock(mu_);
    const auto& ids = entry(id).session.response_ids;
    return std::find(ids.begin(), ids.end(), response_id) != ids.end();
}

void SessionManager::save() const {
    std::lock_guard lock(mu_);
    save_locked();
}

void SessionManager::save_locked() const {
    if (!path_) return;
    nlohmann::json all = nlohmann::json::array();
    for (const auto& [id, e] : sessions_) {
        const auto& s = e->session;
        nlohmann::json turns = nlohmann::json::array();
        for (const auto& t : s.turns) turns.push_back({{"query", t.query}, {"response", t.response}});
        nlohmann::json sources = nlohmann::json::array();
        for (const auto& src : s.sources) {
            sources.push_back({{"source", source_to_json(src.source)}, {"tier", static_cast<int>(src.tier)}});
        }
        all.push_back({{"session_id", s.session_id},
                       {"created_at", to_millis(s.created_at)},
                       {"turns", turns},
                       {"preferences", prefs_to_json(s.preferences)},
                       {"sources", sources},
                       {"response_ids", s.response_ids}});
    }
    auto tmp = *path_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) return;
        out << all.dump();
    }
    std::error_code ec;
    std::filesystem::rename(tmp, *path_, ec);
}

void SessionManager::load() {
    if (!path_ || !std::filesystem::exists(*path_)) return;
    std::ifstream in(*path_);
    nlohmann::json all;
    try {
        in >> all;
    } catch (const nlohmann::json::exception&) {
        return;  // unreadable snapshot: start with no sessions
    }
    if (!all.is_array()) return;
    for (const auto& j : all) {
        auto e = std::make_unique<Entry>();
        auto& s = e->session;
        s.session_id = j.value("session_id", "");
        if (s.session_id.empty()) continue;
        s.created_at = from_millis(j.value("created_at", std::int64_t{0}));
        for (const auto& t : j.value("turns", nlohmann::json::array())) {
            s.turns.push_back({t.value("query", ""), t.value("response", "")});
        }
        s.preferences = prefs_from_json(j.value("preferences", nlohmann::json::object()), defaults_);
        for (const auto& src : j.value("sources", nlohmann::json::array())) {
            s.sources.push_back({source_from_json(src.value("source", nlohmann::json::object())),
                                 static_cast<Tier>(src.value("tier", 3))});
        }
        s.response_ids = j.value("response_ids", std::vector<std::string>{});
        sessions_.emplace(s.session_id, std::move(e));
    }
}

}  // namespace finagent
