#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace forge::text {

// Splits on ASCII whitespace; never yields empty tokens.
std::vector<std::string_view> split_words(std::string_view s);

std::string_view trim(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Decodes UTF-8 into code points. Invalid sequences decode to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(char32_t cp);

std::size_t codepoint_count(std::string_view s);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// splitmix64 finalizer; used to fork seeds by stable labels.
std::uint64_t mix64(std::uint64_t x);
std::uint64_t fork_seed(std::uint64_t seed, std::string_view label);

std::string base64_encode(std::string_view bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace forge::text
