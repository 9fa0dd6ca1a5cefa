#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace audiomt::text {

// Splits on ASCII whitespace. Han, kana and Hangul code points are emitted as
// one word each, so "我们 go" yields {"我", "们", "go"}.
std::vector<std::string> split_words(std::string_view text);

std::string join_words(const std::vector<std::string>& words,
                       std::string_view separator = " ");

bool is_cjk(char32_t code_point);

// Decodes one UTF-8 sequence starting at `pos`; invalid bytes decode as
// themselves with length 1.
char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t* length);

bool is_space(char c);

std::string to_lower_ascii(std::string_view s);

}  // namespace audiomt::text
