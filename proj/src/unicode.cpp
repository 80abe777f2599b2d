#include "dialogkit/unicode.hpp"

namespace dialogkit::unicode {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

}  // namespace

std::u32string decode(std::string_view utf8) {
    std::u32string out;
    out.reserve(utf8.size());
    std::size_t i = 0;
    const std::size_t n = utf8.size();
    while (i < n) {
        const auto b0 = static_cast<unsigned char>(utf8[i]);
        int extra = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            out.push_back(b0);
            ++i;
            continue;
        } else if ((b0 & 0xE0) == 0xC0) {
            extra = 1;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            extra = 2;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            extra = 3;
            cp = b0 & 0x07;
        } else {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        if (i + extra >= n) {
            out.push_back(kReplacement);
            break;
        }
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            const auto b = static_cast<unsigned char>(utf8[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back(kReplacement);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += extra + 1;
    }
    return out;
}

void append(std::string& out, char32_t c) {
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

std::string encode(std::u32string_view scalars) {
    std::string out;
    out.reserve(scalars.size() * 3);
    for (char32_t c : scalars) append(out, c);
    return out;
}

bool is_space(char32_t c) {
    switch (c) {
        case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
            return true;
        default:
            return c >= 0x2000 && c <= 0x200A;
    }
}

bool is_punct(char32_t c) {
    if (c < 0x80) {
        return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
               (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
    }
    if (c >= 0x2010 && c <= 0x2027) return true;   // general punctuation: dashes, quotes, ellipsis
    if (c >= 0x2030 && c <= 0x205E) return true;
    if (c >= 0x3001 && c <= 0x3003) return true;   // 、。〃
    if (c >= 0x3008 && c <= 0x3011) return true;   // CJK brackets
    if (c >= 0x3014 && c <= 0x301F) return true;
    if (c == 0x30FB) return true;                  // katakana middle dot
    if (c >= 0xFE30 && c <= 0xFE4F) return true;   // CJK compatibility forms
    if (c >= 0xFE50 && c <= 0xFE6B) return true;   // small form variants
    if (c >= 0xFF01 && c <= 0xFF0F) return true;   // fullwidth ASCII punctuation
    if (c >= 0xFF1A && c <= 0xFF20) return true;
    if (c >= 0xFF3B && c <= 0xFF40) return true;
    if (c >= 0xFF5B && c <= 0xFF65) return true;
    return c == 0xA1 || c == 0xA7 || c == 0xAB || c == 0xB6 || c == 0xB7 || c == 0xBB || c == 0xBF;
}

char32_t fold_width(char32_t c) {
    if (c >= 0xFF01 && c <= 0xFF5E) return c - 0xFEE0;
    if (c == 0x3000) return U' ';
    return c;
}

char32_t ascii_lower(char32_t c) {
    return (c >= U'A' && c <= U'Z') ? c + 32 : c;
}

std::string normalize_for_match(std::string_view utf8) {
    std::string out;
    out.reserve(utf8.size());
    for (char32_t c : decode(utf8)) append(out, ascii_lower(fold_width(c)));
    return out;
}

std::string_view trim(std::string_view utf8) {
    // Only ASCII whitespace and U+3000 are trimmed; enough for record validation.
    auto is_ws_at_front = [](std::string_view s) -> std::size_t {
        if (s.empty()) return 0;
        const auto b = static_cast<unsigned char>(s[0]);
        if (b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\v' || b == '\f') return 1;
        if (s.size() >= 3 && s.substr(0, 3) == "\xE3\x80\x80") return 3;
        return 0;
    };
    auto is_ws_at_back = [](std::string_view s) -> std::size_t {
        if (s.empty()) return 0;
        const auto b = static_cast<unsigned char>(s.back());
        if (b == ' ' || b == '\t' || b == '\n' || b == '\r' || b == '\v' || b == '\f') return 1;
        if (s.size() >= 3 && s.substr(s.size() - 3) == "\xE3\x80\x80") return 3;
        return 0;
    };
    while (std::size_t k = is_ws_at_front(utf8)) utf8.remove_prefix(k);
    while (std::size_t k = is_ws_at_back(utf8)) utf8.remove_suffix(k);
    return utf8;
}

}  // namespace dialogkit::unicode
