#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finagent/embed.hpp"
#include "finagent/response.hpp"
#include "finagent/source.hpp"

namespace finagent {

enum class RecordKind : std::uint8_t { Corpus = 0, Response = 1, Feedback = 2 };

std::string_view to_string(RecordKind kind) noexcept;

struct EmbeddingRecord {
    std::uint64_t id = 0;
    std::string collection;
    EmbeddingVector vector;
    std::string payload_text;
    SourceRef source;
    RecordKind record_kind = RecordKind::Corpus;
    Timestamp created_at{};

    friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct SearchHit {
    std::uint64_t record_id = 0;
    double score = 0.0;
    std::string payload_text;
    SourceRef source;
};

/// What load found on disk. A torn or corrupt log tail is cut off at the last
/// entry whose checksum verifies; `truncated` says whether that happened.
struct RecoveryReport {
    std::size_t snapshot_records = 0;
    std::size_t log_records = 0;
    bool truncated = false;
    std::uint64_t valid_log_bytes = 0;
    std::uint64_t dropped_log_bytes = 0;
    std::string message;
};

struct StoreOptions {
    bool sync_writes = true;             // fdatasync each append before acknowledging
    std::size_t snapshot_every = 4096;   // compact after this many log entries; 0 = manual only
};

bool valid_collection_name(std::string_view name) noexcept;

/// Session-scoped provenance for written-back interactions.
std::string interaction_uri(std::string_view session_id, std::string_view response_id);

/// The dynamic vector store.
///
/// On disk a store directory holds `snapshot.bin` (full record array) and
/// `log.bin` (records appended since the snapshot). Both start with a format
/// version byte and are little-endian; every record is framed as
/// `u32 length | u32 crc32 | payload`. Search is an exact cosine scan.
///
/// Thread-safe: any number of concurrent readers, writes serialised.
class Store {
public:
    /// compact_and_load: replays snapshot + log from `dir` (created if absent).
    static Store open(const std::filesystem::path& dir, std::shared_ptr<const EmbeddingProvider> provider,
                      StoreOptions options = {});
    /// Volatile store with no backing directory.
    static Store in_memory(std::shared_ptr<const EmbeddingProvider> provider);

    Store(Store&&) noexcept;
    Store& operator=(Store&&) noexcept;
    ~Store();

    /// Embeds `text` with the store's provider and appends it durably.
    std::uint64_t insert(const std::string& collection, const std::string& text, const SourceRef& source,
                         RecordKind kind);
    /// Appends a pre-computed vector.
    std::uint64_t insert_vector(const std::string& collection, EmbeddingVector vector, const std::string& text,
                                const SourceRef& source, RecordKind kind);

    std::vector<SearchHit> search(const std::string& collection, const EmbeddingVector& query,
                                  std::size_t k) const;

    /// Writes the response (and feedback, if any) back as records.
    std::vector<std::uint64_t> record_interaction(const std::string& collection, const std::string& session_id,
                                                  const AgentResponse& response,
                                                  const std::optional<Feedback>& feedback = std::nullopt);
    /// Feedback for a response recorded earlier. Throws UnknownResponse.
    std::uint64_t record_feedback(const std::string& collection, const std::string& session_id,
                                  const Feedback& feedback);
    bool has_response(const std::string& response_id) const;

    /// Rewrites the snapshot with every record and empties the log.
    void compact();

    std::vector<EmbeddingRecord> records(const std::string& collection) const;
    std::vector<EmbeddingRecord> all_records() const;
    std::optional<EmbeddingRecord> get(std::uint64_t id) const;
    std::vector<std::string> collections() const;
    std::optional<std::size_t> collection_dim(const std::string& collection) const;
    std::size_t size() const;
    std::size_t size(const std::string& collection) const;

    /// FNV-1a over the serialised records; changes iff the contents change.
    std::uint64_t state_hash() const;

    const RecoveryReport& recovery() const;
    const EmbeddingProvider& provider() const;
    std::optional<std::filesystem::path> directory() const;

private:
    struct Impl;
    explicit Store(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

namespace storefmt {

inline constexpr std::uint8_t kVersion = 1;
inline constexpr char kLogMagic[4] = {'F', 'A', 'L', 'G'};
inline constexpr char kSnapshotMagic[4] = {'F', 'A', 'S', 'N'};
inline constexpr std::size_t kLogHeaderSize = 5;

std::string encode_record(const EmbeddingRecord& rec);
/// Throws Error{CorruptLog} on malformed input.
EmbeddingRecord decode_record(std::string_view bytes);
/// `u32 length | u32 crc32 | payload`
std::string frame(std::string_view payload);
std::uint32_t crc32(std::string_view bytes);

}  // namespace storefmt

}  // namespace finagent
