#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace medrag::utf8 {

/// Strict decode: rejects overlong forms, surrogates and truncated sequences.
std::optional<std::u32string> decode(std::string_view bytes);

std::string encode(std::u32string_view text);

/// Number of code points in valid UTF-8. Continuation bytes are not counted.
std::size_t length(std::string_view text) noexcept;

inline bool is_space(char32_t c) noexcept {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' ||
         c == U'\v' || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 ||
         c == 0x202F || c == 0x205F || c == 0x3000;
}

}  // namespace medrag::utf8
