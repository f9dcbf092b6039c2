// Copyright 2026 The avllm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal UTF-8 helpers. Offsets throughout the library are codepoint
// indices, so text is decoded once and re-encoded per slice.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace avllm::utf8 {

inline constexpr char32_t kReplacement = 0xFFFD;

namespace detail {

inline bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

// Decodes one codepoint at `pos`. Returns the number of bytes consumed, or 0
// when the sequence is malformed (overlong, surrogate, truncated, > U+10FFFF).
inline std::size_t decode_one(std::string_view s, std::size_t pos, char32_t& out) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) {
    out = b0;
    return 1;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  char32_t min = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2; cp = b0 & 0x1F; min = 0x80;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3; cp = b0 & 0x0F; min = 0x800;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4; cp = b0 & 0x07; min = 0x10000;
  } else {
    return 0;
  }
  if (pos + len > s.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if (!is_continuation(b)) return 0;
    cp = (cp << 6) | (b & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  out = cp;
  return len;
}

}  // namespace detail

inline bool is_valid(std::string_view s) {
  for (std::size_t pos = 0; pos < s.size();) {
    char32_t cp;
    const std::size_t n = detail::decode_one(s, pos, cp);
    if (n == 0) return false;
    pos += n;
  }
  return true;
}

// Malformed bytes decode to U+FFFD, one per offending byte.
inline std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t pos = 0; pos < s.size();) {
    char32_t cp;
    const std::size_t n = detail::decode_one(s, pos, cp);
    if (n == 0) {
      out.push_back(kReplacement);
      ++pos;
    } else {
      out.push_back(cp);
      pos += n;
    }
  }
  return out;
}

inline void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string encode(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) append(out, cp);
  return out;
}

inline std::size_t length(std::string_view s) { return decode(s).size(); }

// First `n` codepoints of `s` (all of `s` if shorter).
inline std::string prefix(std::string_view s, std::size_t n) {
  std::size_t pos = 0;
  for (std::size_t count = 0; pos < s.size() && count < n; ++count) {
    char32_t cp;
    const std::size_t len = detail::decode_one(s, pos, cp);
    pos += len == 0 ? 1 : len;
  }
  return std::string(s.substr(0, pos));
}

// Token alphabet for the hash embedder: ASCII letters and digits, Latin-1
// letters, and every codepoint from U+0100 up except the whitespace,
// punctuation and special blocks listed below. No Unicode database is
// consulted, which keeps tokenization identical on every platform.
inline bool is_token_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') ||
           (cp >= 'A' && cp <= 'Z');
  }
  if (cp < 0x100) {
    return (cp >= 0xC0 && cp != 0xD7 && cp != 0xF7) || cp == 0xAA ||
           cp == 0xB5 || cp == 0xBA;
  }
  if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
  if (cp >= 0x2E00 && cp <= 0x2E7F) return false;  // supplemental punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK symbols
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;  // CJK compatibility forms
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;  // fullwidth punctuation
  if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;  // specials, incl. U+FFFD
  if (cp == 0x1680 || cp == 0x180E) return false;
  return true;
}

// ASCII and Latin-1 uppercase letters only.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  return cp;
}

}  // namespace avllm::utf8
