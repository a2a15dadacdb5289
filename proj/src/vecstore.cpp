#include "finagent/vecstore.hpp"

#include "finagent/error.hpp"
#include "finagent/text.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_map>

#include <fmt/format.h>

namespace finagent {

std::string_view to_string(RecordKind kind) noexcept {
    switch (kind) {
        case RecordKind::Corpus: return "corpus";
        case RecordKind::Response: return "response";
        case RecordKind::Feedback: return "feedback";
    }
    return "corpus";
}

bool valid_collection_name(std::string_view name) noexcept {
    if (name.empty()) return false;
    return std::all_of(name.begin(), name.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

std::string interaction_uri(std::string_view session_id, std::string_view response_id) {
    return fmt::format("session:{}/response:{}", session_id, response_id);
}

std::string render_feedback(const Feedback& fb) {
    auto out = fmt::format("rating: {}", fb.rating);
    if (fb.comment && !fb.comment->empty()) out += "\ncomment: " + *fb.comment;
    return out;
}

std::optional<int> parse_feedback_rating(const std::string& payload) {
    if (!payload.starts_with("rating: ")) return std::nullopt;
    auto line = payload.substr(8, payload.find('\n') == std::string::npos ? std::string::npos
                                                                             : payload.find('\n') - 8);
    try {
        std::size_t used = 0;
        int r = std::stoi(line, &used);
        if (used != line.size()) return std::nullopt;
        return r;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

// ---------------------------------------------------------------------------
// Binary format
// ---------------------------------------------------------------------------
namespace storefmt {
namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    std::string take() { return std::move(buf_); }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        auto n = u32();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw Error(ErrorCode::CorruptLog, "record ends prematurely");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32(std::string_view bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths
    std::size_t off = 0;
    while (off < bytes.size()) {
        auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
        c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
        off += n;
    }
    return static_cast<std::uint32_t>(c);
}

std::string encode_record(const EmbeddingRecord& rec) {
    Writer w;
    w.u64(rec.id);
    w.u8(static_cast<std::uint8_t>(rec.record_kind));
    w.i64(to_millis(rec.created_at));
    w.str(rec.collection);
    w.u32(static_cast<std::uint32_t>(rec.vector.dim()));
    for (double v : rec.vector.values) w.f64(v);
    w.str(rec.payload_text);
    w.str(rec.source.id);
    w.u8(static_cast<std::uint8_t>(rec.source.kind));
    w.str(rec.source.uri);
    w.u8(rec.source.title ? 1 : 0);
    if (rec.source.title) w.str(*rec.source.title);
    w.i64(to_millis(rec.source.fetched_at));
    return w.take();
}

EmbeddingRecord decode_record(std::string_view bytes) {
    Reader r(bytes);
    EmbeddingRecord rec;
    rec.id = r.u64();
    auto kind = r.u8();
    if (kind > 2) throw Error(ErrorCode::CorruptLog, "bad record kind");
    rec.record_kind = static_cast<RecordKind>(kind);
    rec.created_at = from_millis(r.i64());
    rec.collection = r.str();
    auto dim = r.u32();
    if (dim > (bytes.size() / 8)) throw Error(ErrorCode::CorruptLog, "bad vector dimension");
    rec.vector.values.resize(dim);
    for (auto& v : rec.vector.values) v = r.f64();
    rec.payload_text = r.str();
    rec.source.id = r.str();
    auto skind = r.u8();
    if (skind > 3) throw Error(ErrorCode::CorruptLog, "bad source kind");
    rec.source.kind = static_cast<SourceKind>(skind);
    rec.source.uri = r.str();
    if (r.u8()) rec.source.title = r.str();
    rec.source.fetched_at = from_millis(r.i64());
    if (!r.done()) throw Error(ErrorCode::CorruptLog, "trailing bytes in record");
    return rec;
}

std::string frame(std::string_view payload) {
    Writer w;
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.u32(crc32(payload));
    auto out = w.take();
    out.append(payload);
    return out;
}

}  // namespace storefmt

// ---------------------------------------------------------------------------
// Store
// ---------------------------------------------------------------------------
namespace {

constexpr std::uint32_t kMaxRecordBytes = 1u << 30;

std::uint32_t read_u32(std::string_view s, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<std::uint8_t>(s[off + i])) << (8 * i);
    return v;
}

std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::StorageError, fmt::format("cannot read {}", p.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_fully(int fd, std::string_view bytes, const std::filesystem::path& p) {
    std::size_t off = 0;
    while (off < bytes.size()) {
        auto n = ::write(fd, bytes.data() + off, bytes.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::StorageError, fmt::format("write to {} failed: {}", p.string(), std::strerror(errno)));
        }
        off += static_cast<std::size_t>(n);
    }
}

void fsync_dir(const std::filesystem::path& dir) {
    int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (fd >= 0) {
        ::fsync(fd);
        ::close(fd);
    }
}

std::string log_header() {
    std::string h;
    h.push_back(static_cast<char>(storefmt::kVersion));
    h.append(storefmt::kLogMagic, 4);
    return h;
}

}  // namespace

struct Store::Impl {
    std::shared_ptr<const EmbeddingProvider> provider;
    std::optional<std::filesystem::path> dir;
    StoreOptions options;
    RecoveryReport recovery;

    mutable std::shared_mutex mu;
    std::vector<EmbeddingRecord> records;
    std::vector<double> norms;
    std::map<std::string, std::vector<std::size_t>> by_collection;
    std::unordered_map<std::string, std::size_t> response_index;
    std::uint64_t next_id = 0;

    int log_fd = -1;
    std::size_t log_entries = 0;

    ~Impl() {
        if (log_fd >= 0) ::close(log_fd);
    }

    std::filesystem::path log_path() const { return *dir / "log.bin"; }
    std::filesystem::path snapshot_path() const { return *dir / "snapshot.bin"; }

    void index(EmbeddingRecord rec) {
        auto pos = records.size();
        norms.push_back(l2_norm(rec.vector));
        by_collection[rec.collection].push_back(pos);
        if (rec.record_kind == RecordKind::Response) response_index[rec.source.id] = pos;
        next_id = std::max(next_id, rec.id + 1);
        records.push_back(std::move(rec));
    }

    void check_dim(const std::string& collection, std::size_t dim) const {
        auto it = by_collection.find(collection);
        if (it == by_collection.end() || it->second.empty()) return;
        auto have = records[it->second.front()].vector.dim();
        if (have != dim) {
            throw Error(ErrorCode::DimensionMismatch,
                        fmt::format("collection '{}' holds dim {} vectors, got dim {}", collection, have, dim));
        }
    }

    void load_snapshot() {
        auto path = snapshot_path();
        if (!std::filesystem::exists(path)) return;
        auto data = read_all(path);
        if (data.size() < 1 + 4 + 8 + 8 + 4) throw Error(ErrorCode::CorruptLog, "snapshot.bin is truncated");
        if (static_cast<std::uint8_t>(data[0]) != storefmt::kVersion) {
            throw Error(ErrorCode::CorruptLog,
                        fmt::format("snapshot.bin has unsupported version {}", static_cast<int>(data[0])));
        }
        if (std::memcmp(data.data() + 1, storefmt::kSnapshotMagic, 4) != 0) {
            throw Error(ErrorCode::CorruptLog, "snapshot.bin has bad magic");
        }
        auto body = std::string_view(data).substr(0, data.size() - 4);
        if (storefmt::crc32(body) != read_u32(data, data.size() - 4)) {
            throw Error(ErrorCode::CorruptLog, "snapshot.bin checksum mismatch");
        }
        std::uint64_t count = 0, snap_next = 0;
        for (int i = 0; i < 8; ++i) count |= std::uint64_t(static_cast<std::uint8_t>(data[5 + i])) << (8 * i);
        for (int i = 0; i < 8; ++i) snap_next |= std::uint64_t(static_cast<std::uint8_t>(data[13 + i])) << (8 * i);
        std::size_t off = 21;
        for (std::uint64_t n = 0; n < count; ++n) {
            if (body.size() - off < 8) throw Error(ErrorCode::CorruptLog, "snapshot.bin record table truncated");
            auto len = read_u32(body, off);
            auto crc = read_u32(body, off + 4);
            if (len > body.size() - off - 8) throw Error(ErrorCode::CorruptLog, "snapshot.bin record overruns file");
            auto payload = body.substr(off + 8, len);
            if (storefmt::crc32(payload) != crc) throw Error(ErrorCode::CorruptLog, "snapshot.bin record checksum");
            index(storefmt::decode_record(payload));
            off += 8 + len;
        }
        next_id = std::max(next_id, snap_next);
        recovery.snapshot_records = records.size();
    }

    void load_log() {
        auto path = log_path();
        std::string data;
        if (std::filesystem::exists(path)) data = read_all(path);
        const auto header = log_header();
        std::uint64_t valid = 0;
        if (data.size() >= header.size()) {
            if (static_cast<std::uint8_t>(data[0]) != storefmt::kVersion) {
                throw Error(ErrorCode::CorruptLog,
                            fmt::format("log.bin has unsupported version {}", static_cast<int>(data[0])));
            }
            if (std::memcmp(data.data() + 1, storefmt::kLogMagic, 4) != 0) {
                throw Error(ErrorCode::CorruptLog, "log.bin has bad magic");
            }
            valid = header.size();
            std::size_t off = header.size();
            const std::uint64_t snapshot_next = next_id;
            while (off < data.size()) {
                std::string reason;
                if (data.size() - off < 8) {
                    reason = "partial frame header";
                } else {
                    auto len = read_u32(data, off);
                    auto crc = read_u32(data, off + 4);
                    if (len > kMaxRecordBytes || len > data.size() - off - 8) {
                        reason = "frame overruns file";
                    } else {
                        auto payload = std::string_view(data).substr(off + 8, len);
                        if (storefmt::crc32(payload) != crc) {
                            reason = "checksum mismatch";
                        } else {
                            try {
                                auto rec = storefmt::decode_record(payload);
                                if (rec.id < snapshot_next) {
                                    // already folded into the snapshot
                                } else if (rec.id < next_id) {
                                    reason = "non-increasing record id";
                                } else {
                                    index(std::move(rec));
                                    ++recovery.log_records;
                                }
                            } catch (const Error& e) {
                                reason = e.what();
                            }
                        }
                        if (reason.empty()) {
                            off += 8 + len;
                            valid = off;
                            ++log_entries;
                            continue;
                        }
                    }
                }
                recovery.truncated = true;
                recovery.message = fmt::format("log.bin: {} at byte {}; dropped {} trailing bytes", reason, off,
                                               data.size() - off);
                break;
            }
        } else if (!data.empty()) {
            recovery.truncated = true;
            recovery.message = "log.bin: torn header";
        }
        recovery.valid_log_bytes = valid;
        recovery.dropped_log_bytes = data.size() > valid ? data.size() - valid : 0;

        log_fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_CLOEXEC, 0644);
        if (log_fd < 0) {
            throw Error(ErrorCode::StorageError, fmt::format("cannot open {}: {}", path.string(), std::strerror(errno)));
        }
        if (valid < header.size()) {
            if (::ftruncate(log_fd, 0) != 0) throw Error(ErrorCode::StorageError, "cannot reset log.bin");
            ::lseek(log_fd, 0, SEEK_SET);
            write_fully(log_fd, header, path);
            valid = header.size();
            recovery.valid_log_bytes = valid;
        } else if (valid < data.size()) {
            if (::ftruncate(log_fd, static_cast<off_t>(valid)) != 0) {
                throw Error(ErrorCode::StorageError, "cannot truncate corrupt log tail");
            }
        }
        ::fsync(log_fd);
        ::lseek(log_fd, 0, SEEK_END);
    }

    void append(const EmbeddingRecord& rec) {
        if (!dir) return;
        auto bytes = storefmt::frame(storefmt::encode_record(rec));
        auto before = ::lseek(log_fd, 0, SEEK_END);
        try {
            write_fully(log_fd, bytes, log_path());
            if (options.sync_writes && ::fdatasync(log_fd) != 0) {
                throw Error(ErrorCode::StorageError, fmt::format("fdatasync failed: {}", std::strerror(errno)));
            }
        } catch (...) {
            if (before >= 0 && ::ftruncate(log_fd, before) == 0) ::lseek(log_fd, before, SEEK_SET);
            throw;
        }
        ++log_entries;
    }

    void compact_locked() {
        if (!dir) return;
        std::string out;
        out.push_back(static_cast<char>(storefmt::kVersion));
        out.append(storefmt::kSnapshotMagic, 4);
        auto put64 = [&out](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
        };
        put64(records.size());
        put64(next_id);
        for (const auto& r : records) out += storefmt::frame(storefmt::encode_record(r));
        auto crc = storefmt::crc32(out);
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((crc >> (8 * i)) & 0xFF));

        auto tmp = *dir / "snapshot.bin.tmp";
        int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
        if (fd < 0) throw Error(ErrorCode::StorageError, fmt::format("cannot create {}", tmp.string()));
        try {
            write_fully(fd, out, tmp);
            if (::fsync(fd) != 0) throw Error(ErrorCode::StorageError, "fsync of snapshot failed");
        } catch (...) {
            ::close(fd);
            throw;
        }
        ::close(fd);
        std::error_code ec;
        std::filesystem::rename(tmp, snapshot_path(), ec);
        if (ec) throw Error(ErrorCode::StorageError, fmt::format("cannot install snapshot: {}", ec.message()));
        fsync_dir(*dir);
        // a crash from here until the log is reset leaves records in both
        // files; load skips log entries with ids the snapshot already covers
        if (::ftruncate(log_fd, static_cast<off_t>(storefmt::kLogHeaderSize)) != 0) {
            throw Error(ErrorCode::StorageError, "cannot reset log.bin after snapshot");
        }
        ::lseek(log_fd, 0, SEEK_END);
        ::fsync(log_fd);
        log_entries = 0;
    }

    std::uint64_t insert_locked(const std::string& collection, EmbeddingVector vector, const std::string& text,
                                const SourceRef& source, RecordKind kind) {
        check_dim(collection, vector.dim());
        EmbeddingRecord rec;
        rec.id = next_id;
        rec.collection = collection;
        rec.vector = std::move(vector);
        rec.payload_text = text;
        rec.source = source;
        rec.record_kind = kind;
        rec.created_at = now_utc();
        append(rec);
        auto id = rec.id;
        index(std::move(rec));
        if (dir && options.snapshot_every > 0 && log_entries >= options.snapshot_every) compact_locked();
        return id;
    }
};

Store::Store(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
Store::Store(Store&&) noexcept = default;
Store& Store::operator=(Store&&) noexcept = default;
Store::~Store() = default;

Store Store::open(const std::filesystem::path& dir, std::shared_ptr<const EmbeddingProvider> provider,
                  StoreOptions options) {
    if (!provider) throw Error(ErrorCode::InvalidArgument, "store needs an embedding provider");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::StorageError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
    auto impl = std::make_unique<Impl>();
    impl->provider = std::move(provider);
    impl->dir = dir;
    impl->options = options;
    impl->load_snapshot();
    impl->load_log();
    return Store(std::move(impl));
}

Store Store::in_memory(std::shared_ptr<const EmbeddingProvider> provider) {
    if (!provider) throw Error(ErrorCode::InvalidArgument, "store needs an embedding provider");
    auto impl = std::make_unique<Impl>();
    impl->provider = std::move(provider);
    return Store(std::move(impl));
}

std::uint64_t Store::insert(const std::string& collection, const std::string& text, const SourceRef& source,
                            RecordKind kind) {
    if (trim(text).empty()) throw Error(ErrorCode::InvalidArgument, "cannot insert empty text");
    if (!valid_collection_name(collection)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("invalid collection name '{}'", collection));
    }
    auto vec = impl_->provider->embed(text);
    std::unique_lock lock(impl_->mu);
    return impl_->insert_locked(collection, std::move(vec), text, source, kind);
}

std::uint64_t Store::insert_vector(const std::string& collection, EmbeddingVector vector, const std::string& text,
                                   const SourceRef& source, RecordKind kind) {
    if (!valid_collection_name(collection)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("invalid collection name '{}'", collection));
    }
    if (vector.dim() == 0) throw Error(ErrorCode::InvalidArgument, "vector has no dimensions");
    for (double v : vector.values) {
        if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "vector has non-finite values");
    }
    std::unique_lock lock(impl_->mu);
    return impl_->insert_locked(collection, std::move(vector), text, source, kind);
}

std::vector<SearchHit> Store::search(const std::string& collection, const EmbeddingVector& query,
                                     std::size_t k) const {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    std::shared_lock lock(impl_->mu);
    auto it = impl_->by_collection.find(collection);
    if (it == impl_->by_collection.end() || it->second.empty()) return {};
    impl_->check_dim(collection, query.dim());

    const double qn = l2_norm(query);
    struct Scored {
        double score;
        std::uint64_t id;
        std::size_t pos;
    };
    std::vector<Scored> scored;
    scored.reserve(it->second.size());
    for (auto pos : it->second) {
        const auto& rec = impl_->records[pos];
        const double rn = impl_->norms[pos];
        double s = 0.0;
        if (qn != 0.0 && rn != 0.0) {
            double d = 0.0;
            for (std::size_t i = 0; i < query.dim(); ++i) d += query.values[i] * rec.vector.values[i];
            s = std::clamp(d / (qn * rn), -1.0, 1.0);
        }
        scored.push_back({s, rec.id, pos});
    }
    auto better = [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    };
    auto take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
    std::vector<SearchHit> hits;
    hits.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& rec = impl_->records[scored[i].pos];
        hits.push_back({rec.id, scored[i].score, rec.payload_text, rec.source});
    }
    return hits;
}

std::vector<std::uint64_t> Store::record_interaction(const std::string& collection, const std::string& session_id,
                                                     const AgentResponse& response,
                                                     const std::optional<Feedback>& feedback) {
    if (feedback && feedback->response_id != response.response_id) {
        throw Error(ErrorCode::UnknownResponse,
                    fmt::format("feedback names response '{}' but the response is '{}'", feedback->response_id,
                                response.response_id));
    }
    SourceRef src;
    src.id = response.response_id;
    src.kind = SourceKind::StoreRecord;
    src.uri = interaction_uri(session_id, response.response_id);
    if (!response.prompt.empty()) src.title = response.prompt;
    src.fetched_at = now_utc();

    std::vector<std::uint64_t> ids;
    auto text = trim(response.text).empty() ? std::string("(empty response)") : response.text;
    ids.push_back(insert(collection, text, src, RecordKind::Response));
    if (feedback) ids.push_back(record_feedback(collection, session_id, *feedback));
    return ids;
}

std::uint64_t Store::record_feedback(const std::string& collection, const std::string& session_id,
                                     const Feedback& feedback) {
    if (feedback.rating < -1 || feedback.rating > 1) {
        throw Error(ErrorCode::InvalidArgument, "feedback rating must be -1, 0 or 1");
    }
    if (!has_response(feedback.response_id)) {
        throw Error(ErrorCode::UnknownResponse, fmt::format("no response with id '{}'", feedback.response_id));
    }
    SourceRef src;
    src.id = "feedback:" + feedback.response_id;
    src.kind = SourceKind::StoreRecord;
    src.uri = interaction_uri(session_id, feedback.response_id);
    src.fetched_at = now_utc();
    return insert(collection, render_feedback(feedback), src, RecordKind::Feedback);
}

bool Store::has_response(const std::string& response_id) const {
    std::shared_lock lock(impl_->mu);
    return impl_->response_index.contains(response_id);
}

void Store::compact() {
    std::unique_lock lock(impl_->mu);
    impl_->compact_locked();
}

std::vector<EmbeddingRecord> Store::records(const std::string& collection) const {
    std::shared_lock lock(impl_->mu);
    std::vector<EmbeddingRecord> out;
    if (auto it = impl_->by_collection.find(collection); it != impl_->by_collection.end()) {
        out.reserve(it->second.size());
        for (auto pos : it->second) out.push_back(impl_->records[pos]);
    }
    return out;
}

std::vector<EmbeddingRecord> Store::all_records() const {
    std::shared_lock lock(impl_->mu);
    return impl_->records;
}

std::optional<EmbeddingRecord> Store::get(std::uint64_t id) const {
    std::shared_lock lock(impl_->mu);
    auto it = std::lower_bound(impl_->records.begin(), impl_->records.end(), id,
                               [](const EmbeddingRecord& r, std::uint64_t v) { return r.id < v; });
    if (it == impl_->records.end() || it->id != id) return std::nullopt;
    return *it;
}

std::vector<std::string> Store::collections() const {
    std::shared_lock lock(impl_->mu);
    std::vector<std::string> out;
    for (const auto& [name, _] : impl_->by_collection) out.push_back(name);
    return out;
}

std::optional<std::size_t> Store::collection_dim(const std::string& collection) const {
    std::shared_lock lock(impl_->mu);
    auto it = impl_->by_collection.find(collection);
    if (it == impl_->by_collection.end() || it->second.empty()) return std::nullopt;
    return impl_->records[it->second.front()].vector.dim();
}

std::size_t Store::size() const {
    std::shared_lock lock(impl_->mu);
    return impl_->records.size();
}

std::size_t Store::size(const std::string& collection) const {
    std::shared_lock lock(impl_->mu);
    auto it = impl_->by_collection.find(collection);
    return it == impl_->by_collection.end() ? 0 : it->second.size();
}

std::uint64_t Store::state_hash() const {
    std::shared_lock lock(impl_->mu);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : impl_->records) {
        for (unsigned char c : storefmt::encode_record(r)) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

const RecoveryReport& Store::recovery() const { return impl_->recovery; }
const EmbeddingProvider& Store::provider() const { return *impl_->provider; }
std::optional<std::filesystem::path> Store::directory() const { return impl_->dir; }

}  // namespace finagent
