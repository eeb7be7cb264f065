#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "consistok/align.hpp"
#include "consistok/bpe.hpp"
#include "consistok/fix_outcome.hpp"
#include "consistok/mrqa.hpp"

namespace consistok {

enum class ConsistencyStatus {
    ConsistentRaw,              // standalone answer ids occur verbatim in the context ids
    ConsistentWithPrefixSpace,  // only the " " + answer ids do
    Inconsistent,
};

const char* to_string(ConsistencyStatus status) noexcept;

struct ConsistencyVerdict {
    ConsistencyStatus status = ConsistencyStatus::Inconsistent;
    /// Standalone tokenization of the answer as given.
    std::vector<TokenId> standalone_ids;
    /// Leftmost verbatim match of the accepted variant.
    std::optional<TokenSpan> location;
};

struct AnswerVariants {
    std::vector<TokenId> raw;
    std::vector<TokenId> prefixed;
};

/// Tokenizes `answer` alone and with one leading space. Throws Error(Usage) on an empty answer.
AnswerVariants answer_variants(const Tokenizer& tok, std::string_view answer);

/// Classifies `answer` against the tokenized context, raw variant first.
ConsistencyVerdict check_consistency(const Tokenizer& tok, const Encoding& context_enc, std::string_view answer);

/// Extracts the answer's token ids from the tokenized context.
///
/// Tries, in order: the standalone ids at the gold location (or anywhere
/// without a span); the exact token slice of the gold span; the minimal
/// covering slice when it equals the answer up to edge whitespace; a verbatim
/// match of the prefixed, then raw, variant anywhere; the covering slice of
/// any textual occurrence of the answer. Falls back to the raw standalone ids
/// (Unresolved).
///
/// Throws Error(Data) when the context text at `gold_span` differs from
/// `answer` beyond trailing whitespace, and Error(Usage) for an empty answer.
FixOutcome make_consistent_target(const Tokenizer& tok, std::string_view context, const Encoding& context_enc,
                                  std::string_view answer, std::optional<CharSpan> gold_span);

/// Strips leading and trailing whitespace (Python str.isspace()).
std::string_view strip_whitespace(std::string_view text);

enum class AnswerPolicy {
    First,  // first detected answer (else first gold answer)
    Any,    // consistent when any gold answer is
};

struct AnalyzeOptions {
    /// Uniformly sample this many questions (reservoir sampling over the stream).
    std::optional<std::size_t> sample_size;
    std::uint64_t seed = 42;
    AnswerPolicy policy = AnswerPolicy::First;
    std::size_t workers = 1;
    bool keep_verdicts = false;
};

struct ExampleVerdict {
    std::string qid;
    ConsistencyStatus status;
};

struct ConsistencyStats {
    std::size_t total = 0;
    std::size_t consistent_raw = 0;
    std::size_t consistent_prefix_only = 0;
    std::size_t inconsistent = 0;
    /// Examples without any answer text; not part of `total`.
    std::size_t skipped = 0;
    std::vector<ExampleVerdict> verdicts;

    void add(ConsistencyStatus status);
    /// Raw standalone ids absent from the context ids.
    double pct_inconsistent_raw() const;
    /// Neither variant present.
    double pct_inconsistent_after_prefix() const;
};

/// Pull-style example stream; returns nullopt at end.
using ExampleSource = std::function<std::optional<ExtractiveExample>()>;

ExampleSource source_from(DatasetReader& reader);
ExampleSource source_from(std::span<const ExtractiveExample> examples);

ConsistencyStats analyze_dataset(const Tokenizer& tok, const ExampleSource& examples,
                                 const AnalyzeOptions& options = {});

struct FixOptions {
    std::size_t workers = 1;
};

struct FixSummary {
    std::size_t total = 0;
    std::map<FixMethod, std::size_t> counts;
    /// Examples whose every detected span disagreed with the context.
    std::size_t skipped_span_mismatch = 0;
    /// Examples without any answer text.
    std::size_t skipped_no_answer = 0;
};

/// Repairs every example and writes it to `sink` in input order.
FixSummary fix_dataset(const Tokenizer& tok, const ExampleSource& examples, FixedDatasetWriter& sink,
                       const FixOptions& options = {});

enum class SkipReason { None, SpanMismatch, NoAnswer };

/// The repair fix_dataset applies to one example.
struct ExampleFix {
    FixOutcome outcome;
    std::string answer;
    std::optional<CharSpan> gold_span;
    SkipReason skipped = SkipReason::None;
};

/// Repairs one example against its context encoding, using the first detected
/// answer whose span validates (or the first gold answer when no spans exist).
ExampleFix fix_example(const Tokenizer& tok, const ExtractiveExample& example, const Encoding& context_enc);

}  // namespace consistok
