#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace finagent {

/// FNV-1a, 64-bit. Fixed so hashes and feature-hashed vectors are portable.
constexpr std::uint64_t fnv1a64(std::string_view data) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

struct Token {
    std::string text;    // lowercased
    std::size_t begin;   // byte offset into the source text
    std::size_t end;
};

/// Reference tokenizer: lowercase, split on maximal runs of non-alphanumeric
/// characters. Bytes >= 0x80 count as word characters so UTF-8 words stay whole.
std::vector<Token> tokenize(std::string_view text);

std::size_t count_tokens(std::string_view text);

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);

/// Trim, then replace every whitespace run with a single space.
std::string collapse_whitespace(std::string_view s);

inline bool is_word_byte(unsigned char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace finagent
