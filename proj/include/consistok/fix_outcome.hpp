#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "consistok/align.hpp"
#include "consistok/bpe.hpp"

namespace consistok {

/// How a training target was obtained, cheapest first.
enum class FixMethod {
    AlreadyConsistent,  // standalone ids already occur in the context ids
    ExactSlice,         // context tokens align exactly with the answer span
    ExpandedSlice,      // minimal covering tokens, equal to the answer modulo edge whitespace
    SubsequenceSearch,  // a standalone variant occurs verbatim elsewhere in the context ids
    Unresolved,         // no faithful slice; raw standalone ids kept
};

inline constexpr FixMethod kAllFixMethods[] = {FixMethod::AlreadyConsistent, FixMethod::ExactSlice,
                                               FixMethod::ExpandedSlice, FixMethod::SubsequenceSearch,
                                               FixMethod::Unresolved};

const char* to_string(FixMethod method) noexcept;
std::optional<FixMethod> parse_fix_method(std::string_view name) noexcept;

struct FixOutcome {
    std::vector<TokenId> target_ids;
    FixMethod method = FixMethod::Unresolved;
    /// Where target_ids sits in the context encoding; absent when Unresolved.
    std::optional<TokenSpan> context_span;
    std::string note;
};

}  // namespace consistok
