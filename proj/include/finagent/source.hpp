#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace finagent {

using Clock = std::chrono::system_clock;
using Timestamp = std::chrono::time_point<Clock, std::chrono::milliseconds>;

inline Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(Clock::now());
}

inline std::int64_t to_millis(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp from_millis(std::int64_t ms) { return Timestamp{std::chrono::milliseconds{ms}}; }

enum class SourceKind : std::uint8_t {
    PreferredUrl = 0,
    WebSearch = 1,
    LocalFile = 2,
    StoreRecord = 3,
};

std::string_view to_string(SourceKind kind) noexcept;
std::optional<SourceKind> source_kind_from_string(std::string_view s) noexcept;

/// Provenance handle for anything the agent can retrieve.
struct SourceRef {
    std::string id;
    SourceKind kind = SourceKind::StoreRecord;
    std::string uri;
    std::optional<std::string> title;
    Timestamp fetched_at{};

    friend bool operator==(const SourceRef&, const SourceRef&) = default;
};

/// Returns a fresh random identifier with the given prefix, e.g. "src-3f9a...".
std::string make_id(std::string_view prefix);

/// True when `s` is an absolute http(s) URL with a non-empty host.
bool is_absolute_url(std::string_view s);

/// RFC 3986 percent-encoding of everything outside the unreserved set.
std::string percent_encode(std::string_view s);

}  // namespace finagent
