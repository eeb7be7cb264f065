#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "consistok/consist.hpp"
#include "consistok/mrqa.hpp"

namespace consistok {

/// SQuAD answer normalization: lowercase, drop ASCII punctuation, drop the
/// whole words "a", "an", "the", collapse whitespace.
std::string normalize_answer(std::string_view text);

/// 1 when the normalized prediction equals any normalized gold, else 0.
int exact_match(std::string_view prediction, std::span<const std::string> golds);

/// Token-overlap F1 over normalized whitespace tokens, maximized over golds.
/// When either side normalizes to nothing, scores 1 only if both do.
double f1_score(std::string_view prediction, std::span<const std::string> golds);

/// True when the whitespace-trimmed prediction is not a (case-sensitive)
/// substring of the context: an out-of-context answer.
bool hallucination_check(std::string_view prediction, std::string_view context);

/// Same test after normalizing both sides. Diagnostic only.
bool hallucination_check_normalized(std::string_view prediction, std::string_view context);

struct ExampleScore {
    std::string qid;
    double em = 0.0;
    double f1 = 0.0;
    bool predicted = false;
    bool hallucinated = false;
};

struct MetricsReport {
    double em = 0.0;  // percent
    double f1 = 0.0;  // percent
    std::size_t n = 0;
    std::size_t missing_predictions = 0;
    std::vector<std::string> unknown_qids;
    std::size_t predicted = 0;
    double hallucination_rate = 0.0;             // percent of predicted answers
    double hallucination_rate_normalized = 0.0;  // percent, diagnostic
    std::vector<std::string> hallucinated_qids;
    /// One entry per gold question, in input order.
    std::vector<ExampleScore> per_example;
};

struct EvaluateOptions {
    std::size_t workers = 1;
};

/// Scores predictions against every question of `examples`. Missing
/// predictions score 0; predictions for unknown qids are listed and ignored.
MetricsReport evaluate(const PredictionSet& predictions, const ExampleSource& examples,
                       const EvaluateOptions& options = {});

struct SignificanceResult {
    double p_value = 1.0;
    /// Mean of a - b.
    double statistic = 0.0;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    /// All 2^n sign assignments were enumerated instead of sampled.
    bool exact = false;
};

inline constexpr std::size_t kDefaultResamples = 10000;
inline constexpr std::uint64_t kDefaultSeed = 42;

/// Two-sided paired randomization (sign-flip) test on the differences a - b.
/// p = (1 + #{|resampled mean| >= |observed mean|}) / (resamples + 1). When
/// 2^n <= resamples the full permutation distribution is enumerated and p is
/// the exact fraction of sign assignments at least as extreme. Resample i
/// draws from an RNG seeded by (seed, i), so results do not depend on
/// `workers`. Throws Error(Usage) on unequal lengths.
SignificanceResult paired_significance(std::span<const double> a, std::span<const double> b,
                                       std::size_t resamples = kDefaultResamples,
                                       std::uint64_t seed = kDefaultSeed, std::size_t workers = 1);

}  // namespace consistok
