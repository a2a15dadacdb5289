#include "finagent/error.hpp"
#include "finagent/source.hpp"
#include "finagent/text.hpp"

#include <cctype>
#include <random>

#include <fmt/format.h>

namespace finagent {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::NetworkError: return "NetworkError";
        case ErrorCode::NotText: return "NotText";
        case ErrorCode::EmptyContent: return "EmptyContent";
        case ErrorCode::ProviderError: return "ProviderError";
        case ErrorCode::FileNotFound: return "FileNotFound";
        case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
        case ErrorCode::ConverterFailed: return "ConverterFailed";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::StorageError: return "StorageError";
        case ErrorCode::CorruptLog: return "CorruptLog";
        case ErrorCode::UnknownResponse: return "UnknownResponse";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::BackendError: return "BackendError";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::EmptyCollection: return "EmptyCollection";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

std::string_view to_string(SourceKind kind) noexcept {
    switch (kind) {
        case SourceKind::PreferredUrl: return "preferred_url";
        case SourceKind::WebSearch: return "web_search";
        case SourceKind::LocalFile: return "local_file";
        case SourceKind::StoreRecord: return "store_record";
    }
    return "store_record";
}

std::optional<SourceKind> source_kind_from_string(std::string_view s) noexcept {
    if (s == "preferred_url") return SourceKind::PreferredUrl;
    if (s == "web_search") return SourceKind::WebSearch;
    if (s == "local_file") return SourceKind::LocalFile;
    if (s == "store_record") return SourceKind::StoreRecord;
    return std::nullopt;
}

std::string make_id(std::string_view prefix) {
    thread_local std::mt19937_64 rng{std::random_device{}()};
    return fmt::format("{}-{:016x}", prefix, rng());
}

bool is_absolute_url(std::string_view s) {
    std::string_view rest;
    if (s.starts_with("http://")) {
        rest = s.substr(7);
    } else if (s.starts_with("https://")) {
        rest = s.substr(8);
    } else {
        return false;
    }
    auto host_end = rest.find_first_of("/?#");
    auto authority = rest.substr(0, host_end);
    if (authority.empty()) return false;
    for (unsigned char c : authority) {
        if (std::isspace(c) || c < 0x20) return false;
        if (!(std::isalnum(c) || c == '.' || c == '-' || c == ':' || c == '_' || c == '[' ||
              c == ']' || c == '@' || c == '%'))
            return false;
    }
    auto colon = authority.rfind(':');
    if (colon != std::string_view::npos && authority.find(']') == std::string_view::npos) {
        auto port = authority.substr(colon + 1);
        if (port.empty()) return false;
        for (char c : port)
            if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        if (colon == 0) return false;
    }
    for (unsigned char c : rest)
        if (std::isspace(c)) return false;
    return true;
}

std::string percent_encode(std::string_view s) {
    std::string out;
    out.reserve(s.size() * 3);
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out += fmt::format("%{:02X}", c);
        }
    }
    return out;
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        std::size_t start = i;
        while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
        tokens.push_back({to_lower_ascii(text.substr(start, i - start)), start, i});
    }
    return tokens;
}

std::size_t count_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        bool w = is_word_byte(c);
        if (w && !in_word) ++n;
        in_word = w;
    }
    return n;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::string trim(std::string_view s) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

}  // namespace finagent
