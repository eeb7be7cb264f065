#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace consistok::unicode {

/// One decoded codepoint and the byte range it occupies in the source.
struct Codepoint {
    char32_t value;
    std::size_t byte_offset;
    std::size_t byte_length;
};

/// Returns true when `text` is well-formed UTF-8 (no overlongs, no surrogates).
bool is_valid_utf8(std::string_view text) noexcept;

/// Decodes well-formed UTF-8. Throws std::invalid_argument on malformed input.
std::vector<Codepoint> decode_utf8(std::string_view text);

void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(char32_t cp);

/// Number of codepoints in well-formed UTF-8.
std::size_t codepoint_count(std::string_view text);

// General-category predicates (L*, N*).
bool is_letter(char32_t cp) noexcept;
bool is_number(char32_t cp) noexcept;

/// The Unicode White_Space property; the `\s` class of the segmentation pattern.
bool is_white_space(char32_t cp) noexcept;

/// Python's str.isspace(); used by the SQuAD-style answer normalization.
bool is_python_space(char32_t cp) noexcept;

/// Simple (1:1) lowercase mapping, as Python's str.lower() for those codepoints.
char32_t to_lower(char32_t cp) noexcept;

}  // namespace consistok::unicode
