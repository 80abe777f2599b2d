#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dialogkit::unicode {

// Decodes UTF-8 into scalar values. Invalid bytes decode to U+FFFD.
std::u32string decode(std::string_view utf8);

std::string encode(std::u32string_view scalars);
void append(std::string& out, char32_t scalar);

bool is_space(char32_t c);
bool is_punct(char32_t c);

// Fullwidth ASCII variants and the ideographic space fold to their halfwidth forms.
char32_t fold_width(char32_t c);
char32_t ascii_lower(char32_t c);

// Width folding followed by ASCII case folding, applied per scalar.
std::string normalize_for_match(std::string_view utf8);

std::string_view trim(std::string_view utf8);

}  // namespace dialogkit::unicode
