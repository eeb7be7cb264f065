#include "consistok/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "consistok/error.hpp"
#include "consistok/unicode.hpp"
#include "parallel.hpp"

namespace consistok {
namespace {

constexpr std::string_view kAsciiPunctuation = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";

bool is_word_char(char32_t cp) { return cp == U'_' || unicode::is_letter(cp) || unicode::is_number(cp); }

std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (const auto& cp : unicode::decode_utf8(text)) {
        if (unicode::is_python_space(cp.value)) {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.append(text.substr(cp.byte_offset, cp.byte_length));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

std::vector<std::string> normalized_tokens(std::string_view text) { return split_whitespace(normalize_answer(text)); }

double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() || gold.empty()) return pred.empty() && gold.empty() ? 1.0 : 0.0;
    std::unordered_map<std::string_view, std::size_t> gold_counts;
    for (const auto& t : gold) ++gold_counts[t];
    std::size_t overlap = 0;
    for (const auto& t : pred) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

std::vector<std::string> golds_of(const ExtractiveExample& ex) {
    if (!ex.gold_answers.empty()) return ex.gold_answers;
    std::vector<std::string> out;
    for (const auto& d : ex.detected) out.push_back(d.text);
    return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::string normalize_answer(std::string_view text) {
    // lower + drop punctuation
    std::vector<char32_t> cps;
    for (const auto& cp : unicode::decode_utf8(text)) {
        const char32_t lower = unicode::to_lower(cp.value);
        if (lower < 0x80 && kAsciiPunctuation.find(static_cast<char>(lower)) != std::string_view::npos) continue;
        cps.push_back(lower);
    }
    // \b(a|an|the)\b -> " "
    std::vector<char32_t> no_articles;
    no_articles.reserve(cps.size());
    for (std::size_t i = 0; i < cps.size();) {
        if (!is_word_char(cps[i])) {
            no_articles.push_back(cps[i++]);
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && is_word_char(cps[j])) ++j;
        const std::u32string_view word(cps.data() + i, j - i);
        if (word == U"a" || word == U"an" || word == U"the") {
            no_articles.push_back(U' ');
        } else {
            no_articles.insert(no_articles.end(), cps.begin() + static_cast<std::ptrdiff_t>(i),
                               cps.begin() + static_cast<std::ptrdiff_t>(j));
        }
        i = j;
    }
    // " ".join(text.split())
    std::string out;
    bool pending_space = false;
    for (const char32_t cp : no_articles) {
        if (unicode::is_python_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        unicode::append_utf8(out, cp);
    }
    return out;
}

int exact_match(std::string_view prediction, std::span<const std::string> golds) {
    const std::string pred = normalize_answer(prediction);
    return std::any_of(golds.begin(), golds.end(), [&](const std::string& g) { return normalize_answer(g) == pred; })
               ? 1
               : 0;
}

double f1_score(std::string_view prediction, std::span<const std::string> golds) {
    const auto pred = normalized_tokens(prediction);
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, token_f1(pred, normalized_tokens(g)));
    return best;
}

bool hallucination_check(std::string_view prediction, std::string_view context) {
    return context.find(strip_whitespace(prediction)) == std::string_view::npos;
}

bool hallucination_check_normalized(std::string_view prediction, std::string_view context) {
    return normalize_answer(context).find(normalize_answer(prediction)) == std::string::npos;
}

MetricsReport evaluate(const PredictionSet& predictions, const ExampleSource& examples,
                       const EvaluateOptions& options) {
    std::vector<ExtractiveExample> all;
    while (auto ex = examples()) all.push_back(std::move(*ex));

    std::vector<ExampleScore> scores(all.size());
    std::vector<char> normalized_flags(all.size(), 0);
    detail::parallel_for(all.size(), options.workers, [&](std::size_t i) {
        const ExtractiveExample& ex = all[i];
        ExampleScore& score = scores[i];
        score.qid = ex.qid;
        auto it = predictions.find(ex.qid);
        if (it == predictions.end()) return;
        const auto golds = golds_of(ex);
        score.predicted = true;
        score.em = exact_match(it->second, golds);
        score.f1 = f1_score(it->second, golds);
        score.hallucinated = hallucination_check(it->second, ex.context);
        normalized_flags[i] = hallucination_check_normalized(it->second, ex.context) ? 1 : 0;
    });

    MetricsReport report;
    report.n = all.size();
    std::unordered_set<std::string_view> known;
    std::size_t hallucinated_normalized = 0;
    double em_sum = 0.0;
    double f1_sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const ExampleScore& s = scores[i];
        known.insert(all[i].qid);
        em_sum += s.em;
        f1_sum += s.f1;
        if (!s.predicted) {
            ++report.missing_predictions;
            continue;
        }
        ++report.predicted;
        if (s.hallucinated) report.hallucinated_qids.push_back(s.qid);
        hallucinated_normalized += normalized_flags[i];
    }
    for (const auto& [qid, answer] : predictions) {
        if (!known.contains(qid)) report.unknown_qids.push_back(qid);
    }
    if (report.n > 0) {
        report.em = 100.0 * em_sum / static_cast<double>(report.n);
        report.f1 = 100.0 * f1_sum / static_cast<double>(report.n);
    }
    if (report.predicted > 0) {
        const auto predicted = static_cast<double>(report.predicted);
        report.hallucination_rate = 100.0 * static_cast<double>(report.hallucinated_qids.size()) / predicted;
        report.hallucination_rate_normalized = 100.0 * static_cast<double>(hallucinated_normalized) / predicted;
    }
    report.per_example = std::move(scores);
    return report;
}

SignificanceResult paired_significance(std::span<const double> a, std::span<const double> b, std::size_t resamples,
                                       std::uint64_t seed, std::size_t workers) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::Usage, "paired scores differ in length: " + std::to_string(a.size()) + " vs " +
                                          std::to_string(b.size()));
    }
    if (resamples == 0) throw Error(ErrorKind::Usage, "resamples must be positive");

    const std::size_t n = a.size();
    std::vector<double> diffs(n);
    double observed = 0.0;
    double magnitude = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diffs[i] = a[i] - b[i];
        observed += diffs[i];
        magnitude += std::abs(diffs[i]);
    }
    // Sums stand in for means (same n); the tolerance absorbs summation-order rounding.
    const double threshold = std::abs(observed) - 1e-9 * std::max(1.0, magnitude);
    const auto extreme = [&](double sum) { return std::abs(sum) >= threshold; };

    SignificanceResult result;
    result.statistic = n == 0 ? 0.0 : observed / static_cast<double>(n);
    result.seed = seed;

    if (n < 63 && (std::uint64_t{1} << n) <= resamples) {
        const std::uint64_t assignments = std::uint64_t{1} << n;
        std::size_t count = 0;
        for (std::uint64_t mask = 0; mask < assignments; ++mask) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += (mask >> i) & 1U ? -diffs[i] : diffs[i];
            count += extreme(sum) ? 1 : 0;
        }
        result.p_value = static_cast<double>(count) / static_cast<double>(assignments);
        result.resamples = assignments;
        result.exact = true;
        return result;
    }

    std::vector<char> hits(resamples, 0);
    detail::parallel_for(resamples, workers, [&](std::size_t r) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(r)));
        double sum = 0.0;
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 64 == 0) bits = rng();
            sum += (bits >> (i % 64)) & 1U ? -diffs[i] : diffs[i];
        }
        hits[r] = extreme(sum) ? 1 : 0;
    });
    const auto count = static_cast<std::size_t>(std::count(hits.begin(), hits.end(), 1));
    result.p_value = static_cast<double>(1 + count) / static_cast<double>(resamples + 1);
    result.resamples = resamples;
    return result;
}

}  // namespace consistok
