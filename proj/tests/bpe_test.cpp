#include "consistok/bpe.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "consistok/error.hpp"
#include "test_support.hpp"

namespace consistok {
namespace {

using testing::gpt2;
using testing::toy_tokenizer;

std::vector<std::pair<std::string, std::size_t>> segments_of(const Tokenizer& tok, std::string_view text) {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const auto& seg : tok.pretokenize(text)) out.emplace_back(std::string(seg.text), seg.start_byte);
    return out;
}

template <typename Fn>
ErrorKind error_kind_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no consistok::Error thrown";
    return ErrorKind::Usage;
}

TEST(ByteMap, MatchesPublishedTable) {
    const auto expected = oracle::gpt2_byte_units();
    const ByteMap& map = ByteMap::instance();
    for (int b = 0; b < 256; ++b) {
        const auto byte = static_cast<std::uint8_t>(b);
        EXPECT_EQ(map.unit_string(byte), expected[b]);
        EXPECT_EQ(map.byte(map.unit(byte)), byte);
    }
    EXPECT_EQ(map.unit(' '), U'Ġ');
    EXPECT_EQ(map.unit('\n'), U'Ċ');
    EXPECT_FALSE(map.byte(U'Ȁ').has_value());
    EXPECT_EQ(map.from_units(map.to_units("a b\xff")), "a b\xff");
}

TEST(ToyModel, AppliesMergesInRankOrder) {
    const auto tok = toy_tokenizer({{"a", "b"}, {"ab", "c"}});
    const TokenId ab = *tok.id_of("ab");
    const TokenId abc = *tok.id_of("abc");
    EXPECT_EQ(tok.encode("abc").ids, (std::vector<TokenId>{abc}));
    EXPECT_EQ(tok.encode("abcab").ids, (std::vector<TokenId>{abc, ab}));
    EXPECT_EQ(tok.encode("cab").ids, (std::vector<TokenId>{tok.byte_id('c'), ab}));
    EXPECT_EQ(tok.encode("").ids, std::vector<TokenId>{});
    EXPECT_EQ(tok.vocab_size(), 258u);
    EXPECT_EQ(tok.merge_count(), 2u);
}

TEST(ToyModel, LowerRankWinsOverLeftmost) {
    // "bc" outranks "ab", so "abc" becomes a + bc even though ab is leftmost.
    const auto tok = toy_tokenizer({{"b", "c"}, {"a", "b"}});
    EXPECT_EQ(tok.pieces(tok.encode("abc").ids), (std::vector<std::string>{"a", "bc"}));
    // Equal ranks resolve leftmost first: "aaa" -> aa + a.
    const auto tok2 = toy_tokenizer({{"a", "a"}});
    EXPECT_EQ(tok2.pieces(tok2.encode("aaa").ids), (std::vector<std::string>{"aa", "a"}));
}

TEST(Loader, ParsesStreams) {
    std::istringstream vocab(R"({"a": 0, "b": 1, "ab": 2})");
    std::istringstream merges("#version: 0.2\na b\n");
    // The toy vocab lacks the other 254 byte units.
    EXPECT_EQ(error_kind_of([&] { Tokenizer::load(vocab, merges); }), ErrorKind::Data);

    std::ostringstream full;
    full << "{";
    const auto units = oracle::gpt2_byte_units();
    for (int b = 0; b < 256; ++b) full << nlohmann::json(units[b]).dump() << ": " << b << ", ";
    full << "\"ab\": 256}";
    std::istringstream vocab2(full.str());
    std::istringstream merges2("#version: 0.2\r\na b\r\n\r\n");
    const auto tok = Tokenizer::load(vocab2, merges2);
    EXPECT_EQ(tok.merge_count(), 1u);
    EXPECT_EQ(tok.encode("ab").ids, std::vector<TokenId>{256});
}

TEST(Loader, RejectsBadInputs) {
    auto base_vocab = [] {
        Tokenizer::Vocab v;
        TokenId id = 0;
        for (const auto& u : oracle::gpt2_byte_units()) v.emplace(u, id++);
        return v;
    };
    // Merge whose result is missing.
    EXPECT_EQ(error_kind_of([&] { Tokenizer::from_parts(base_vocab(), {{"a", "b"}}); }), ErrorKind::Data);
    // Merge whose parts are missing.
    auto v = base_vocab();
    v.emplace("xyz", 300);
    EXPECT_EQ(error_kind_of([&] { Tokenizer::from_parts(v, {{"xy", "z"}}); }), ErrorKind::Data);
    // Duplicate id.
    auto dup = base_vocab();
    dup.emplace("ab", 0);
    EXPECT_EQ(error_kind_of([&] { Tokenizer::from_parts(dup, {}); }), ErrorKind::Data);

    std::istringstream bad_json("{\"a\": ");
    std::istringstream merges("");
    EXPECT_EQ(error_kind_of([&] { Tokenizer::load(bad_json, merges); }), ErrorKind::Data);

    EXPECT_EQ(error_kind_of([] { Tokenizer::load_files("/nonexistent/vocab.json", "/nonexistent/merges.txt"); }),
              ErrorKind::Io);
}

TEST(Pretokenize, SplitsLikeTheGpt2Pattern) {
    const auto& tok = gpt2();
    using Segs = std::vector<std::pair<std::string, std::size_t>>;
    EXPECT_EQ(segments_of(tok, "Hello world"), (Segs{{"Hello", 0}, {" world", 5}}));
    EXPECT_EQ(segments_of(tok, "1912."), (Segs{{"1912", 0}, {".", 4}}));
    EXPECT_EQ(segments_of(tok, ""), Segs{});
    EXPECT_EQ(segments_of(tok, "x  \n y"), (Segs{{"x", 0}, {"  \n", 1}, {" y", 4}}));
    EXPECT_EQ(segments_of(tok, "trailing  "), (Segs{{"trailing", 0}, {"  ", 8}}));
    EXPECT_EQ(segments_of(tok, "I'm he'll"), (Segs{{"I", 0}, {"'m", 1}, {" he", 3}, {"'ll", 6}}));
    EXPECT_EQ(segments_of(tok, "$5,000"), (Segs{{"$", 0}, {"5", 1}, {",", 2}, {"000", 3}}));
    EXPECT_THROW(tok.pretokenize("bad \xff byte"), std::invalid_argument);
}

TEST(Gpt2Assets, LoadAndSpotCheck) {
    const auto& tok = gpt2();
    EXPECT_EQ(tok.vocab_size(), 50257u);
    EXPECT_EQ(tok.merge_count(), 50000u);
    EXPECT_EQ(tok.id_of("Ġ" "1912"), 34463);
    EXPECT_EQ(tok.id_of("19"), 1129);
    EXPECT_EQ(tok.id_of("12"), 1065);
    EXPECT_EQ(tok.piece(34463), "Ġ" "1912");
}

// Reference ids produced by the HuggingFace GPT-2 tokenizer on the same vocab/merges.
TEST(Gpt2Assets, MatchesReferenceTokenizer) {
    const auto& tok = gpt2();
    const std::vector<std::pair<std::string, std::vector<TokenId>>> cases = {
        {"Hello world", {15496, 995}},
        {"1912.", {1129, 1065, 13}},
        {"  leading", {220, 3756}},
        {"trailing  ", {9535, 4386, 220, 220}},
        {"x  \n y", {87, 220, 220, 198, 331}},
        {"I'm he'll they're we've 'D", {40, 1101, 339, 1183, 484, 821, 356, 1053, 705, 35}},
        {"naïve café 日本 \U0001F600", {2616, 38776, 40304, 10545, 245, 98, 17312, 105, 30325, 222}},
        {" 1912", {34463}},
        {"Super Bowl 50", {12442, 8693, 2026}},
        {"Fenwick was founded in 1912.", {37, 268, 16239, 373, 9393, 287, 34463, 13}},
    };
    for (const auto& [text, ids] : cases) EXPECT_EQ(tok.encode(text).ids, ids) << text;
    EXPECT_EQ(tok.pieces(tok.encode("Hello world").ids), (std::vector<std::string>{"Hello", "Ġworld"}));
}

TEST(Gpt2Assets, DecodeAndOffsets) {
    const auto& tok = gpt2();
    const std::vector<TokenId> g1912{34463};
    EXPECT_EQ(tok.decode(g1912), " 1912");
    EXPECT_THROW(tok.decode(std::vector<TokenId>{999999}), Error);

    const std::string text = "in 1912.";
    const auto enc = tok.encode(text);
    ASSERT_EQ(enc.size(), 3u);
    EXPECT_EQ(enc.offsets[1], (ByteRange{2, 7}));
    EXPECT_EQ(enc.source_len_bytes, text.size());
}

TEST(Gpt2Assets, OffsetsSplitMultiByteCharacters) {
    const auto& tok = gpt2();
    const std::string text = "日本";
    const auto enc = tok.encode(text);
    std::size_t pos = 0;
    for (const auto& r : enc.offsets) {
        EXPECT_EQ(r.start, pos);
        pos = r.end;
    }
    EXPECT_EQ(pos, text.size());
    EXPECT_GT(enc.size(), 2u);
}

TEST(Property, RoundTripAndTiling) {
    const auto& tok = gpt2();
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const std::string s = testing::random_utf8(rng, 48);
        const auto enc = tok.encode(s);
        ASSERT_EQ(tok.decode(enc.ids), s);
        ASSERT_EQ(enc.ids.size(), enc.offsets.size());
        std::size_t pos = 0;
        for (std::size_t k = 0; k < enc.size(); ++k) {
            ASSERT_EQ(enc.offsets[k].start, pos);
            ASSERT_LT(enc.offsets[k].start, enc.offsets[k].end);
            ASSERT_EQ(ByteMap::instance().to_units(s.substr(pos, enc.offsets[k].size())), tok.piece(enc.ids[k]));
            pos = enc.offsets[k].end;
        }
        ASSERT_EQ(pos, s.size());
    }
}

TEST(Property, MergeLoopMatchesBruteForce) {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 40; ++round) {
        const auto merges = testing::random_merges(rng, "ab c1", 30);
        const auto tok = toy_tokenizer(merges);
        for (int i = 0; i < 25; ++i) {
            const std::string s = testing::random_string(rng, "ab c1", 12);
            std::vector<std::string> expected;
            for (const auto& seg : tok.pretokenize(s)) {
                const auto parts = oracle::brute_force_bpe(std::string(seg.text), merges);
                expected.insert(expected.end(), parts.begin(), parts.end());
            }
            ASSERT_EQ(tok.pieces(tok.encode(s).ids), expected) << "input '" << s << "' round " << round;
        }
    }
}

TEST(Property, EncodingIsDeterministicAcrossCopies) {
    const auto& tok = gpt2();
    const Tokenizer copy = tok;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 100; ++i) {
        const auto s = testing::random_utf8(rng, 32);
        EXPECT_EQ(tok.encode(s).ids, copy.encode(s).ids);
    }
}

}  // namespace
}  // namespace consistok
