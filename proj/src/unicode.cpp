#include "consistok/unicode.hpp"

#include <algorithm>
#include <stdexcept>

#include "unicode_tables.hpp"

namespace consistok::unicode {
namespace {

template <std::size_t N>
bool in_ranges(const std::array<tables::CodepointRange, N>& ranges, char32_t cp) noexcept {
    auto it = std::upper_bound(ranges.begin(), ranges.end(), cp,
                               [](char32_t value, const tables::CodepointRange& r) { return value < r.first; });
    if (it == ranges.begin()) return false;
    --it;
    return cp <= it->last;
}

// Decodes one codepoint at `pos`; returns its length, or 0 when malformed.
std::size_t decode_one(std::string_view text, std::size_t pos, char32_t& out) noexcept {
    const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
    const unsigned char lead = byte(pos);
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (lead < 0x80) {
        out = lead;
        return 1;
    } else if ((lead & 0xE0) == 0xC0) {
        len = 2;
        cp = lead & 0x1F;
        min = 0x80;
    } else if ((lead & 0xF0) == 0xE0) {
        len = 3;
        cp = lead & 0x0F;
        min = 0x800;
    } else if ((lead & 0xF8) == 0xF0) {
        len = 4;
        cp = lead & 0x07;
        min = 0x10000;
    } else {
        return 0;
    }
    if (pos + len > text.size()) return 0;
    for (std::size_t i = 1; i < len; ++i) {
        const unsigned char c = byte(pos + i);
        if ((c & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (c & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    out = cp;
    return len;
}

}  // namespace

bool is_valid_utf8(std::string_view text) noexcept {
    std::size_t pos = 0;
    char32_t cp = 0;
    while (pos < text.size()) {
        const std::size_t len = decode_one(text, pos, cp);
        if (len == 0) return false;
        pos += len;
    }
    return true;
}

std::vector<Codepoint> decode_utf8(std::string_view text) {
    std::vector<Codepoint> out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp = 0;
        const std::size_t len = decode_one(text, pos, cp);
        if (len == 0) {
            throw std::invalid_argument("malformed UTF-8 at byte " + std::to_string(pos));
        }
        out.push_back({cp, pos, len});
        pos += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
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

std::string encode_utf8(char32_t cp) {
    std::string out;
    append_utf8(out, cp);
    return out;
}

std::size_t codepoint_count(std::string_view text) {
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        char32_t cp = 0;
        const std::size_t len = decode_one(text, pos, cp);
        if (len == 0) {
            throw std::invalid_argument("malformed UTF-8 at byte " + std::to_string(pos));
        }
        pos += len;
        ++count;
    }
    return count;
}

bool is_letter(char32_t cp) noexcept { return in_ranges(tables::kLetter, cp); }

bool is_number(char32_t cp) noexcept { return in_ranges(tables::kNumber, cp); }

bool is_white_space(char32_t cp) noexcept {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D:
        case 0x20: case 0x85: case 0xA0: case 0x1680:
        case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200A;
    }
}

bool is_python_space(char32_t cp) noexcept { return in_ranges(tables::kPythonSpace, cp); }

char32_t to_lower(char32_t cp) noexcept {
    if (cp < 0x80) {
        return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    }
    const auto& table = tables::kLowercase;
    auto it = std::lower_bound(table.begin(), table.end(), cp,
                               [](const tables::CaseMapping& m, char32_t value) { return m.from < value; });
    return (it != table.end() && it->from == cp) ? it->to : cp;
}

}  // namespace consistok::unicode
