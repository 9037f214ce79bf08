#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace casejudge::text {

/// Unicode NFC normalization of UTF-8 input. Invalid sequences become U+FFFD.
std::string nfc(std::string_view utf8);

std::vector<char32_t> decode(std::string_view utf8);
void append_utf8(std::string& out, char32_t cp);

bool is_space(char32_t cp);
bool is_punct(char32_t cp);
/// Han, Hiragana, Katakana and Hangul code points.
bool is_cjk(char32_t cp);

/// Trims Unicode whitespace from both ends.
std::string trim(std::string_view utf8);

/// Replaces every punctuation code point with a single ASCII space.
std::string punct_to_space(std::string_view utf8);

std::string sha256_hex(std::string_view bytes);

}  // namespace casejudge::text
