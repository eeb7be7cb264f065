#include "consistok/align.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "consistok/error.hpp"
#include "test_support.hpp"

namespace consistok {
namespace {

using testing::gpt2;

TEST(CodepointSpans, ConvertToBytes) {
    const std::string text = "héllo";
    EXPECT_EQ(codepoint_span_to_byte_span(text, {1, 2, true}), (ByteRange{1, 4}));
    EXPECT_EQ(codepoint_span_to_byte_span(text, {1, 3, false}), (ByteRange{1, 4}));
    EXPECT_EQ(codepoint_span_to_byte_span(text, {0, 4, true}), (ByteRange{0, 6}));
    EXPECT_EQ(codepoint_span_to_byte_span(text, {5, 5, false}), (ByteRange{6, 6}));
    EXPECT_THROW(codepoint_span_to_byte_span(text, {0, 5, true}), Error);
    EXPECT_THROW(codepoint_span_to_byte_span(text, {3, 1, true}), Error);
}

TEST(TokenSlice, FenwickContext) {
    const auto& tok = gpt2();
    const std::string ctx = "Fenwick was founded in 1912.";
    const auto enc = tok.encode(ctx);
    const auto at = ctx.find("1912");

    const auto exact = token_slice_for_span(enc, ctx, {at - 1, at + 4});
    EXPECT_EQ(exact.kind, AlignKind::Exact);
    EXPECT_EQ(exact.span, (TokenSpan{6, 7}));
    EXPECT_EQ(exact.decoded, " 1912");

    const auto expanded = token_slice_for_span(enc, ctx, {at, at + 4});
    EXPECT_EQ(expanded.kind, AlignKind::Expanded);
    EXPECT_EQ(expanded.span, (TokenSpan{6, 7}));

    EXPECT_EQ(token_slice_for_span(enc, ctx, {at, at}).kind, AlignKind::Failed);
    EXPECT_EQ(token_slice_for_span(Encoding{}, "", {0, 0}).kind, AlignKind::Failed);
    EXPECT_THROW(token_slice_for_span(enc, ctx, {0, ctx.size() + 1}), Error);
}

TEST(TokenSlice, MatchesSliceEnumeration) {
    const auto& tok = gpt2();
    std::mt19937_64 rng(5);
    for (int i = 0; i < 300; ++i) {
        const std::string s = testing::random_utf8(rng, 40);
        const auto enc = tok.encode(s);
        if (s.empty()) continue;
        std::uniform_int_distribution<std::size_t> pos(0, s.size());
        for (int k = 0; k < 5; ++k) {
            std::size_t a = pos(rng);
            std::size_t b = pos(rng);
            if (a > b) std::swap(a, b);
            const ByteRange range{a, b};
            const auto got = token_slice_for_span(enc, s, range);
            const auto want = oracle::enumerate_slices(enc.offsets, range);
            ASSERT_EQ(got.kind, want.kind) << i << ":" << k;
            ASSERT_EQ(got.span, want.span);
            if (got.span) {
                const auto bytes = token_span_bytes(enc, *got.span);
                EXPECT_EQ(got.decoded, s.substr(bytes.start, bytes.size()));
            }
        }
    }
}

TEST(FindSubsequence, Basics) {
    const std::vector<TokenId> hay{1, 2, 3, 1, 2, 3};
    EXPECT_EQ(find_subsequence(hay, std::vector<TokenId>{2, 3}), (TokenSpan{1, 3}));
    EXPECT_EQ(find_subsequence(hay, std::vector<TokenId>{2, 3}, 2), (TokenSpan{4, 6}));
    EXPECT_EQ(find_subsequence(hay, std::vector<TokenId>{3, 2}), std::nullopt);
    EXPECT_EQ(find_subsequence(hay, std::vector<TokenId>{}), (TokenSpan{0, 0}));
    EXPECT_EQ(find_subsequence(std::vector<TokenId>{}, std::vector<TokenId>{1}), std::nullopt);
    EXPECT_EQ(find_subsequence(hay, std::vector<TokenId>{1, 2, 3, 1, 2, 3, 1}), std::nullopt);
}

TEST(FindSubsequence, MatchesDoubleLoop) {
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> len(0, 30);
    std::uniform_int_distribution<int> nlen(1, 4);
    std::uniform_int_distribution<TokenId> sym(0, 2);
    for (int i = 0; i < 1000; ++i) {
        std::vector<TokenId> hay(static_cast<std::size_t>(len(rng)));
        std::vector<TokenId> needle(static_cast<std::size_t>(nlen(rng)));
        for (auto& t : hay) t = sym(rng);
        for (auto& t : needle) t = sym(rng);
        const std::size_t from = hay.empty() ? 0 : std::uniform_int_distribution<std::size_t>(0, hay.size())(rng);
        const auto got = find_subsequence(hay, needle, from);
        const auto want = oracle::naive_find(hay, needle, from);
        ASSERT_EQ(got.has_value(), want.has_value());
        if (got) {
            EXPECT_EQ(*got, (TokenSpan{*want, *want + needle.size()}));
        }
    }
}

}  // namespace
}  // namespace consistok
