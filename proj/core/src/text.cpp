#include "audiomt/text.hpp"

namespace audiomt::text {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x3040 && cp <= 0x30FF) ||   // hiragana, katakana
         (cp >= 0x3400 && cp <= 0x4DBF) ||   // CJK ext A
         (cp >= 0x4E00 && cp <= 0x9FFF) ||   // CJK unified
         (cp >= 0xAC00 && cp <= 0xD7AF) ||   // hangul syllables
         (cp >= 0xF900 && cp <= 0xFAFF) ||   // compatibility ideographs
         (cp >= 0x20000 && cp <= 0x2FA1F);   // ext B..
}

char32_t decode_utf8(std::string_view s, std::size_t pos, std::size_t* length) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) -> int {
    if (pos + i >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + i]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  int n = 0;
  char32_t cp = 0;
  if (b0 < 0x80) {
    *length = 1;
    return b0;
  } else if ((b0 & 0xE0) == 0xC0) {
    n = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    n = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    n = 3;
    cp = b0 & 0x07;
  } else {
    *length = 1;
    return b0;
  }
  for (int i = 1; i <= n; ++i) {
    const int c = cont(static_cast<std::size_t>(i));
    if (c < 0) {
      *length = 1;
      return b0;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  *length = static_cast<std::size_t>(n) + 1;
  return cp;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_space(s[i])) {
      flush();
      ++i;
      continue;
    }
    std::size_t len = 1;
    const char32_t cp = decode_utf8(s, i, &len);
    if (is_cjk(cp)) {
      flush();
      words.emplace_back(s.substr(i, len));
    } else {
      current.append(s.substr(i, len));
    }
    i += len;
  }
  flush();
  return words;
}

std::string join_words(const std::vector<std::string>& words,
                       std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.append(separator);
    out.append(words[i]);
  }
  return out;
}

std::string to_lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

}  // namespace audiomt::text
