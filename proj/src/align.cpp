#include "consistok/align.hpp"

#include <algorithm>

#include "consistok/error.hpp"
#include "consistok/unicode.hpp"

namespace consistok {

const char* to_string(AlignKind kind) noexcept {
    switch (kind) {
        case AlignKind::Exact: return "exact";
        case AlignKind::Expanded: return "expanded";
        case AlignKind::Failed: return "failed";
    }
    return "?";
}

ByteRange codepoint_span_to_byte_span(std::string_view text, CharSpan span) {
    const std::size_t end = span.inclusive_end ? span.end + 1 : span.end;
    if (span.start > end) {
        throw Error(ErrorKind::Data, "reversed character span [" + std::to_string(span.start) + ", " +
                                         std::to_string(span.end) + "]");
    }
    const auto cps = unicode::decode_utf8(text);
    if (end > cps.size()) {
        throw Error(ErrorKind::Data, "character span ends at " + std::to_string(end) + " beyond text of " +
                                         std::to_string(cps.size()) + " codepoints");
    }
    const auto byte_at = [&](std::size_t i) { return i < cps.size() ? cps[i].byte_offset : text.size(); };
    return {byte_at(span.start), byte_at(end)};
}

ByteRange token_span_bytes(const Encoding& enc, TokenSpan span) {
    if (span.empty()) {
        const std::size_t at = span.start < enc.size() ? enc.offsets[span.start].start : enc.source_len_bytes;
        return {at, at};
    }
    return {enc.offsets[span.start].start, enc.offsets[span.end - 1].end};
}

AlignmentResult token_slice_for_span(const Encoding& enc, std::string_view source, ByteRange bytes) {
    if (bytes.start > bytes.end || bytes.end > enc.source_len_bytes) {
        throw Error(ErrorKind::Usage, "byte span [" + std::to_string(bytes.start) + ", " + std::to_string(bytes.end) +
                                          ") outside encoded source");
    }
    if (enc.empty() || bytes.empty()) return {};

    const auto& offs = enc.offsets;
    // First token ending after the range start, last token starting before its end.
    const auto first = std::upper_bound(offs.begin(), offs.end(), bytes.start,
                                        [](std::size_t v, const ByteRange& r) { return v < r.end; });
    const auto past = std::lower_bound(offs.begin(), offs.end(), bytes.end,
                                       [](const ByteRange& r, std::size_t v) { return r.start < v; });
    const TokenSpan span{static_cast<std::size_t>(first - offs.begin()), static_cast<std::size_t>(past - offs.begin())};
    const ByteRange covered = token_span_bytes(enc, span);

    AlignmentResult result;
    result.kind = covered == bytes ? AlignKind::Exact : AlignKind::Expanded;
    result.span = span;
    result.decoded = std::string(source.substr(covered.start, covered.size()));
    return result;
}

std::optional<TokenSpan> find_subsequence(std::span<const TokenId> haystack, std::span<const TokenId> needle,
                                          std::size_t from) {
    if (from > haystack.size()) return std::nullopt;
    const auto begin = haystack.begin() + static_cast<std::ptrdiff_t>(from);
    const auto it = std::search(begin, haystack.end(), needle.begin(), needle.end());
    if (it == haystack.end() && !needle.empty()) return std::nullopt;
    const auto start = static_cast<std::size_t>(it - haystack.begin());
    return TokenSpan{start, start + needle.size()};
}

}  // namespace consistok
