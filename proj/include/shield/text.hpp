#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace shield::text {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(std::span<const std::string> parts, std::string_view sep);

// Unicode NFC normalization. Invalid UTF-8 sequences are passed through
// unchanged rather than rejected.
std::string nfc(std::string_view s);

// Trim + NFC; used for cache keys and replay lookups.
std::string normalize_for_key(std::string_view s);

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

bool is_ascii_punct(char c);
bool is_ascii_space(char c);

}  // namespace shield::text
