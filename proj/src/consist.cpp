#include "consistok/consist.hpp"

#include <algorithm>
#include <random>

#include "consistok/error.hpp"
#include "consistok/unicode.hpp"
#include "parallel.hpp"

namespace consistok {

const char* to_string(ConsistencyStatus status) noexcept {
    switch (status) {
        case ConsistencyStatus::ConsistentRaw: return "consistent_raw";
        case ConsistencyStatus::ConsistentWithPrefixSpace: return "consistent_with_prefix_space";
        case ConsistencyStatus::Inconsistent: return "inconsistent";
    }
    return "?";
}

std::string_view strip_whitespace(std::string_view text) {
    const auto cps = unicode::decode_utf8(text);
    std::size_t first = 0;
    while (first < cps.size() && unicode::is_python_space(cps[first].value)) ++first;
    std::size_t last = cps.size();
    while (last > first && unicode::is_python_space(cps[last - 1].value)) --last;
    if (first == last) return {};
    const std::size_t begin = cps[first].byte_offset;
    const std::size_t end = cps[last - 1].byte_offset + cps[last - 1].byte_length;
    return text.substr(begin, end - begin);
}

namespace {

std::string_view rstrip_whitespace(std::string_view text) {
    const auto cps = unicode::decode_utf8(text);
    std::size_t last = cps.size();
    while (last > 0 && unicode::is_python_space(cps[last - 1].value)) --last;
    return text.substr(0, last == 0 ? 0 : cps[last - 1].byte_offset + cps[last - 1].byte_length);
}

FixOutcome slice_outcome(const Encoding& enc, TokenSpan span, FixMethod method, std::string note) {
    FixOutcome out;
    out.target_ids.assign(enc.ids.begin() + static_cast<std::ptrdiff_t>(span.start),
                          enc.ids.begin() + static_cast<std::ptrdiff_t>(span.end));
    out.method = method;
    out.context_span = span;
    out.note = std::move(note);
    return out;
}

// Exact or whitespace-equivalent covering slice for `bytes`, if one exists.
std::optional<FixOutcome> slice_for_range(const Encoding& enc, std::string_view context, ByteRange bytes,
                                          std::string_view stripped_answer, const std::string& note) {
    const AlignmentResult aligned = token_slice_for_span(enc, context, bytes);
    if (aligned.kind == AlignKind::Exact) {
        return slice_outcome(enc, *aligned.span, FixMethod::ExactSlice, note);
    }
    if (aligned.kind == AlignKind::Expanded && strip_whitespace(*aligned.decoded) == stripped_answer) {
        return slice_outcome(enc, *aligned.span, FixMethod::ExpandedSlice, note);
    }
    return std::nullopt;
}

}  // namespace

AnswerVariants answer_variants(const Tokenizer& tok, std::string_view answer) {
    if (answer.empty()) throw Error(ErrorKind::Usage, "empty answer");
    std::string prefixed;
    prefixed.reserve(answer.size() + 1);
    prefixed.push_back(' ');
    prefixed.append(answer);
    return {tok.encode(answer).ids, tok.encode(prefixed).ids};
}

ConsistencyVerdict check_consistency(const Tokenizer& tok, const Encoding& context_enc, std::string_view answer) {
    AnswerVariants variants = answer_variants(tok, answer);
    ConsistencyVerdict verdict;
    if (auto at = find_subsequence(context_enc.ids, variants.raw)) {
        verdict.status = ConsistencyStatus::ConsistentRaw;
        verdict.location = at;
    } else if (auto at_prefixed = find_subsequence(context_enc.ids, variants.prefixed)) {
        verdict.status = ConsistencyStatus::ConsistentWithPrefixSpace;
        verdict.location = at_prefixed;
    }
    verdict.standalone_ids = std::move(variants.raw);
    return verdict;
}

FixOutcome make_consistent_target(const Tokenizer& tok, std::string_view context, const Encoding& context_enc,
                                  std::string_view answer, std::optional<CharSpan> gold_span) {
    AnswerVariants variants = answer_variants(tok, answer);
    const std::string_view stripped = strip_whitespace(answer);

    std::optional<ByteRange> gold;
    if (gold_span) {
        const ByteRange bytes = codepoint_span_to_byte_span(context, *gold_span);
        const std::string_view at = context.substr(bytes.start, bytes.size());
        if (rstrip_whitespace(at) != rstrip_whitespace(answer)) {
            throw Error(ErrorKind::Data, "context text '" + std::string(at) + "' at gold span differs from answer '" +
                                             std::string(answer) + "'");
        }
        gold = ByteRange{bytes.start, bytes.start + rstrip_whitespace(at).size()};
    }

    // (1) standalone ids already in the context, at the gold location when known.
    for (auto at = find_subsequence(context_enc.ids, variants.raw); at;
         at = find_subsequence(context_enc.ids, variants.raw, at->start + 1)) {
        if (!gold || token_span_bytes(context_enc, *at).start == gold->start) {
            return slice_outcome(context_enc, *at, FixMethod::AlreadyConsistent, "");
        }
    }

    if (stripped.empty()) {
        FixOutcome out;
        out.target_ids = std::move(variants.raw);
        out.note = "answer is blank";
        return out;
    }

    // (2)-(3) the gold span's own tokens.
    if (gold && !gold->empty()) {
        if (auto out = slice_for_range(context_enc, context, *gold, stripped, "")) return *out;
    }

    // (4) either variant verbatim anywhere in the context.
    if (auto at = find_subsequence(context_enc.ids, variants.prefixed)) {
        return slice_outcome(context_enc, *at, FixMethod::SubsequenceSearch, "prefixed variant");
    }
    if (auto at = find_subsequence(context_enc.ids, variants.raw)) {
        return slice_outcome(context_enc, *at, FixMethod::SubsequenceSearch, "raw variant");
    }

    // Any other textual occurrence whose covering tokens still decode to the answer.
    for (std::size_t pos = context.find(stripped); pos != std::string_view::npos;
         pos = context.find(stripped, pos + 1)) {
        if (gold && pos == gold->start) continue;
        if (auto out = slice_for_range(context_enc, context, {pos, pos + stripped.size()}, stripped,
                                       "text occurrence at byte " + std::to_string(pos))) {
            return *out;
        }
    }

    FixOutcome out;
    out.target_ids = std::move(variants.raw);
    out.method = FixMethod::Unresolved;
    out.note = "no context slice decodes to the answer";
    return out;
}

// ---------------------------------------------------------------------------
// Dataset-level operations

void ConsistencyStats::add(ConsistencyStatus status) {
    ++total;
    switch (status) {
        case ConsistencyStatus::ConsistentRaw: ++consistent_raw; break;
        case ConsistencyStatus::ConsistentWithPrefixSpace: ++consistent_prefix_only; break;
        case ConsistencyStatus::Inconsistent: ++inconsistent; break;
    }
}

double ConsistencyStats::pct_inconsistent_raw() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(consistent_prefix_only + inconsistent) /
                                  static_cast<double>(total);
}

double ConsistencyStats::pct_inconsistent_after_prefix() const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(inconsistent) / static_cast<double>(total);
}

ExampleSource source_from(DatasetReader& reader) {
    return [&reader]() { return reader.next(); };
}

ExampleSource source_from(std::span<const ExtractiveExample> examples) {
    return [examples, i = std::size_t{0}]() mutable -> std::optional<ExtractiveExample> {
        if (i == examples.size()) return std::nullopt;
        return examples[i++];
    };
}

namespace {

constexpr std::size_t kBatchSize = 4096;

// Runs of consecutive examples sharing a context record, so each context is encoded once.
std::vector<std::pair<std::size_t, std::size_t>> context_groups(const std::vector<ExtractiveExample>& batch) {
    std::vector<std::pair<std::size_t, std::size_t>> groups;
    for (std::size_t i = 0; i < batch.size();) {
        std::size_t j = i + 1;
        while (j < batch.size() && batch[j].record_index == batch[i].record_index &&
               batch[j].context == batch[i].context) {
            ++j;
        }
        groups.emplace_back(i, j);
        i = j;
    }
    return groups;
}

std::vector<std::string> candidate_answers(const ExtractiveExample& ex, AnswerPolicy policy) {
    std::vector<std::string> out;
    if (policy == AnswerPolicy::First) {
        if (auto a = ex.primary_answer()) out.push_back(std::move(*a));
        return out;
    }
    const auto add = [&](const std::string& a) {
        if (!a.empty() && std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
    };
    for (const auto& d : ex.detected) add(d.text);
    for (const auto& g : ex.gold_answers) add(g);
    return out;
}

void analyze_batch(const Tokenizer& tok, const std::vector<ExtractiveExample>& batch, const AnalyzeOptions& options,
                   ConsistencyStats& stats) {
    std::vector<std::optional<ConsistencyStatus>> results(batch.size());
    const auto groups = context_groups(batch);
    detail::parallel_for(groups.size(), options.workers, [&](std::size_t g) {
        const auto [begin, end] = groups[g];
        const Encoding enc = tok.encode(batch[begin].context);
        for (std::size_t i = begin; i < end; ++i) {
            for (const auto& answer : candidate_answers(batch[i], options.policy)) {
                const ConsistencyStatus s = check_consistency(tok, enc, answer).status;
                if (!results[i] || s < *results[i]) results[i] = s;
                if (s == ConsistencyStatus::ConsistentRaw) break;
            }
        }
    });
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (!results[i]) {
            ++stats.skipped;
            continue;
        }
        stats.add(*results[i]);
        if (options.keep_verdicts) stats.verdicts.push_back({batch[i].qid, *results[i]});
    }
}

}  // namespace

ConsistencyStats analyze_dataset(const Tokenizer& tok, const ExampleSource& examples, const AnalyzeOptions& options) {
    ConsistencyStats stats;
    if (options.sample_size) {
        // Reservoir sampling (Algorithm R), then analysis in stream order.
        const std::size_t k = *options.sample_size;
        std::mt19937_64 rng(options.seed);
        std::vector<std::pair<std::size_t, ExtractiveExample>> reservoir;
        reservoir.reserve(k);
        std::size_t seen = 0;
        while (auto ex = examples()) {
            if (reservoir.size() < k) {
                reservoir.emplace_back(seen, std::move(*ex));
            } else if (k > 0) {
                std::uniform_int_distribution<std::size_t> pick(0, seen);
                const std::size_t j = pick(rng);
                if (j < k) reservoir[j] = {seen, std::move(*ex)};
            }
            ++seen;
        }
        std::sort(reservoir.begin(), reservoir.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<ExtractiveExample> batch;
        batch.reserve(reservoir.size());
        for (auto& [index, ex] : reservoir) batch.push_back(std::move(ex));
        analyze_batch(tok, batch, options, stats);
        return stats;
    }

    std::vector<ExtractiveExample> batch;
    batch.reserve(kBatchSize);
    for (;;) {
        auto ex = examples();
        if (ex) batch.push_back(std::move(*ex));
        if (batch.size() == kBatchSize || (!ex && !batch.empty())) {
            analyze_batch(tok, batch, options, stats);
            batch.clear();
        }
        if (!ex) break;
    }
    return stats;
}

ExampleFix fix_example(const Tokenizer& tok, const ExtractiveExample& example, const Encoding& context_enc) {
    ExampleFix fix;
    if (auto valid = example.first_valid_span()) {
        fix.answer = valid->first->text;
        fix.gold_span = valid->second;
    } else if (!example.detected.empty()) {
        fix.skipped = SkipReason::SpanMismatch;
        return fix;
    } else if (auto answer = example.primary_answer()) {
        fix.answer = std::move(*answer);
    } else {
        fix.skipped = SkipReason::NoAnswer;
        return fix;
    }
    if (fix.answer.empty()) {
        fix.skipped = SkipReason::NoAnswer;
        return fix;
    }
    try {
        fix.outcome = make_consistent_target(tok, example.context, context_enc, fix.answer, fix.gold_span);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Data) throw;
        fix.skipped = SkipReason::SpanMismatch;
    }
    return fix;
}

FixSummary fix_dataset(const Tokenizer& tok, const ExampleSource& examples, FixedDatasetWriter& sink,
                       const FixOptions& options) {
    FixSummary summary;
    for (const FixMethod m : kAllFixMethods) summary.counts[m] = 0;

    std::vector<ExtractiveExample> batch;
    batch.reserve(kBatchSize);
    const auto run = [&] {
        std::vector<ExampleFix> fixes(batch.size());
        const auto groups = context_groups(batch);
        detail::parallel_for(groups.size(), options.workers, [&](std::size_t g) {
            const auto [begin, end] = groups[g];
            const Encoding enc = tok.encode(batch[begin].context);
            for (std::size_t i = begin; i < end; ++i) fixes[i] = fix_example(tok, batch[i], enc);
        });
        for (std::size_t i = 0; i < batch.size(); ++i) {
            switch (fixes[i].skipped) {
                case SkipReason::SpanMismatch: ++summary.skipped_span_mismatch; continue;
                case SkipReason::NoAnswer: ++summary.skipped_no_answer; continue;
                case SkipReason::None: break;
            }
            ++summary.total;
            ++summary.counts[fixes[i].outcome.method];
            sink.add(batch[i], fixes[i].outcome);
        }
        batch.clear();
    };
    while (auto ex = examples()) {
        batch.push_back(std::move(*ex));
        if (batch.size() == kBatchSize) run();
    }
    if (!batch.empty()) run();
    sink.finish();
    return summary;
}

}  // namespace consistok
