#pragma once

// Slow, obviously-correct reference implementations used to cross-check the
// library. None of these call into the code they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "consistok/align.hpp"
#include "consistok/bpe.hpp"

namespace consistok::oracle {

/// bytes_to_unicode() as published with GPT-2, returned as UTF-8 strings.
inline std::vector<std::string> gpt2_byte_units() {
    std::vector<int> printable;
    for (int b = '!'; b <= '~'; ++b) printable.push_back(b);
    for (int b = 0xA1; b <= 0xAC; ++b) printable.push_back(b);
    for (int b = 0xAE; b <= 0xFF; ++b) printable.push_back(b);
    std::vector<int> cps(256, -1);
    for (int b : printable) cps[b] = b;
    int next = 256;
    for (int b = 0; b < 256; ++b) {
        if (cps[b] < 0) cps[b] = next++;
    }
    std::vector<std::string> out(256);
    for (int b = 0; b < 256; ++b) {
        const auto cp = static_cast<unsigned>(cps[b]);
        std::string s;
        if (cp < 0x80) {
            s.push_back(static_cast<char>(cp));
        } else {
            s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
        out[b] = s;
    }
    return out;
}

/// Applies, one step at a time, the single lowest-ranked merge present
/// anywhere in `parts` (leftmost on ties) until none applies.
inline std::vector<std::string> brute_force_merge(std::vector<std::string> parts,
                                                  const std::vector<std::pair<std::string, std::string>>& merges) {
    for (;;) {
        std::size_t best_rank = std::numeric_limits<std::size_t>::max();
        std::size_t best_pos = 0;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            for (std::size_t r = 0; r < merges.size() && r < best_rank; ++r) {
                if (merges[r].first == parts[i] && merges[r].second == parts[i + 1]) {
                    best_rank = r;
                    best_pos = i;
                    break;
                }
            }
        }
        if (best_rank == std::numeric_limits<std::size_t>::max()) return parts;
        parts[best_pos] += parts[best_pos + 1];
        parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
}

/// Byte-level BPE of one pre-tokenized segment through the brute-force merge loop.
inline std::vector<std::string> brute_force_bpe(const std::string& segment,
                                                const std::vector<std::pair<std::string, std::string>>& merges) {
    static const auto units = gpt2_byte_units();
    std::vector<std::string> parts;
    for (unsigned char c : segment) parts.push_back(units[c]);
    return brute_force_merge(std::move(parts), merges);
}

/// Leftmost i >= from with haystack[i..i+|needle|) == needle, by double loop.
inline std::optional<std::size_t> naive_find(const std::vector<TokenId>& haystack, const std::vector<TokenId>& needle,
                                             std::size_t from = 0) {
    for (std::size_t i = from; i + needle.size() <= haystack.size(); ++i) {
        bool all = true;
        for (std::size_t k = 0; k < needle.size(); ++k) {
            if (haystack[i + k] != needle[k]) {
                all = false;
                break;
            }
        }
        if (all) return i;
    }
    return std::nullopt;
}

struct SliceAnswer {
    AlignKind kind = AlignKind::Failed;
    std::optional<TokenSpan> span;
};

/// Enumerates every token slice [i, j): exact when some slice's bytes equal
/// `range`, otherwise the shortest slice whose bytes contain it.
inline SliceAnswer enumerate_slices(const std::vector<ByteRange>& offsets, ByteRange range) {
    if (offsets.empty() || range.start >= range.end) return {};
    std::optional<TokenSpan> cover;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        for (std::size_t j = i + 1; j <= offsets.size(); ++j) {
            const std::size_t s = offsets[i].start;
            const std::size_t e = offsets[j - 1].end;
            if (s == range.start && e == range.end) return {AlignKind::Exact, TokenSpan{i, j}};
            if (s <= range.start && e >= range.end && (!cover || j - i < cover->size())) cover = TokenSpan{i, j};
        }
    }
    if (!cover) return {};
    return {AlignKind::Expanded, cover};
}

/// Exact two-sided sign-flip p-value: the fraction of all 2^n assignments
/// whose |mean| reaches the observed |mean|.
inline double enumerate_sign_flips(const std::vector<double>& diffs) {
    const std::size_t n = diffs.size();
    double observed = 0.0;
    for (double d : diffs) observed += d;
    observed = n ? std::abs(observed / static_cast<double>(n)) : 0.0;
    std::size_t hits = 0;
    const std::size_t total = std::size_t{1} << n;
    for (std::size_t mask = 0; mask < total; ++mask) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += (mask & (std::size_t{1} << i)) ? -diffs[i] : diffs[i];
        const double mean = n ? std::abs(sum / static_cast<double>(n)) : 0.0;
        if (mean >= observed) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

/// Token F1 from a multiset overlap count over pre-normalized token lists.
inline double hand_count_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    std::map<std::string, int> remaining;
    for (const auto& g : gold) ++remaining[g];
    int common = 0;
    for (const auto& p : pred) {
        if (remaining[p] > 0) {
            --remaining[p];
            ++common;
        }
    }
    if (common == 0) return 0.0;
    return 2.0 * common / static_cast<double>(pred.size() + gold.size());
}

}  // namespace consistok::oracle
