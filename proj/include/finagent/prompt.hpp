#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "finagent/retrieve.hpp"

namespace finagent {

struct RefinedPrompt {
    std::string original;
    std::string refined;
    std::vector<int> evidence_tags;
};

/// Deterministic refinement. With packed items:
///   "Based on the following retrieved sources [1] [2], and the conversation
///    so far, answer precisely and cite source tags: <query>"
/// With no items the query passes through unchanged.
RefinedPrompt refine_query(const std::string& query, std::span<const PackedItem> items);

/// Rewrites the query with a caller-supplied model call; the original query is
/// appended if the rewrite dropped it. Falls back to the template when the
/// rewriter throws or returns nothing.
RefinedPrompt refine_query_rewrite(const std::string& query, std::span<const PackedItem> items,
                                   const std::function<std::string(const std::string&)>& rewriter);

struct SessionSource {
    SourceRef source;
    Tier tier = Tier::Store;
};

struct Session {
    std::string session_id;
    std::vector<Turn> turns;
    UserPreferences preferences;
    Timestamp created_at{};
    std::vector<SessionSource> sources;  // union over this conversation, first-seen order
    std::vector<std::string> response_ids;
};

/// In-memory sessions, optionally mirrored to a JSON file after every change.
class SessionManager {
public:
    explicit SessionManager(std::optional<std::filesystem::path> snapshot_path = std::nullopt,
                            UserPreferences defaults = {});

    std::string create();
    /// Creates the session under `id` if it does not exist yet.
    std::string ensure(const std::string& id);
    bool exists(const std::string& id) const;
    Session get(const std::string& id) const;

    /// Holds the session's request lock; a session's queries run one at a time.
    std::unique_lock<std::mutex> serialize(const std::string& id);

    void append_turn(const std::string& id, Turn turn, const std::string& response_id,
                     const std::vector<SessionSource>& sources);
    void set_preferences(const std::string& id, UserPreferences prefs);
    /// Empties turns and the sources list; keeps preferences. Idempotent.
    Session clear(const std::string& id);

    bool owns_response(const std::string& id, const std::string& response_id) const;

    void save() const;

private:
    struct Entry {
        Session session;
        std::mutex request_mu;
    };
    Entry& entry(const std::string& id);
    const Entry& entry(const std::string& id) const;
    void save_locked() const;
    void load();

    std::optional<std::filesystem::path> path_;
    UserPreferences defaults_;
    mutable std::mutex mu_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
};

}  // namespace finagent
