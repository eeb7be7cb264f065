#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "consistok/bpe.hpp"

namespace consistok {

/// A codepoint range. With `inclusive_end` the last codepoint is `end` itself
/// (the MRQA `char_spans` convention); otherwise [start, end).
struct CharSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    bool inclusive_end = false;

    friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

/// Half-open token range [start, end) into an Encoding.
struct TokenSpan {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - start; }
    bool empty() const noexcept { return start == end; }
    friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

enum class AlignKind { Exact, Expanded, Failed };

const char* to_string(AlignKind kind) noexcept;

struct AlignmentResult {
    AlignKind kind = AlignKind::Failed;
    std::optional<TokenSpan> span;
    /// Source text covered by `span`.
    std::optional<std::string> decoded;
};

/// Converts a codepoint span of `text` to a half-open byte range.
/// Throws Error(Data) when the span falls outside `text` or is reversed.
ByteRange codepoint_span_to_byte_span(std::string_view text, CharSpan span);

/// Byte range covered by tokens [span.start, span.end) of `enc`.
ByteRange token_span_bytes(const Encoding& enc, TokenSpan span);

/// Finds the tokens of `enc` covering `bytes`. Exact when token boundaries
/// coincide with both ends of the range, Expanded when the minimal covering
/// run overshoots, Failed for an empty encoding or an empty range.
/// `source` is the text `enc` was produced from. Throws Error(Usage) when
/// `bytes` lies outside [0, enc.source_len_bytes].
AlignmentResult token_slice_for_span(const Encoding& enc, std::string_view source, ByteRange bytes);

/// Leftmost occurrence of `needle` in `haystack` at or after `from`.
/// An empty needle matches at `from` (when from <= haystack.size()).
std::optional<TokenSpan> find_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle,
                                          std::size_t from = 0);

}  // namespace consistok
