#include "consistok/consist.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "consistok/error.hpp"
#include "consistok/unicode.hpp"
#include "test_support.hpp"

namespace consistok {
namespace {

using testing::data_path;
using testing::gpt2;

const std::string kFenwick = "Fenwick Hall, the oldest building on campus, was completed in 1912.";

std::vector<ExtractiveExample> load(std::string_view name) {
    auto reader = DatasetReader::open(data_path(name));
    return read_all(reader).second;
}

std::string ascii_strip(std::string_view s) {
    const auto space = [](char c) { return c == ' ' || c == '\n' || c == '\t'; };
    while (!s.empty() && space(s.front())) s.remove_prefix(1);
    while (!s.empty() && space(s.back())) s.remove_suffix(1);
    return std::string(s);
}

// Brute force: does any contiguous run of context ids decode to the answer, edge spaces aside?
bool some_slice_decodes_to(const Tokenizer& tok, const Encoding& enc, std::string_view answer) {
    const std::string want = ascii_strip(answer);
    for (std::size_t i = 0; i < enc.size(); ++i) {
        std::string text;
        for (std::size_t j = i; j < enc.size(); ++j) {
            text += tok.decode(std::span<const TokenId>(&enc.ids[j], 1));
            if (ascii_strip(text) == want) return true;
            if (text.size() > answer.size() + 8) break;
        }
    }
    return false;
}

ConsistencyStatus brute_force_status(const Tokenizer& tok, const Encoding& enc, const std::string& answer) {
    if (oracle::naive_find(enc.ids, tok.encode(answer).ids)) return ConsistencyStatus::ConsistentRaw;
    if (oracle::naive_find(enc.ids, tok.encode(" " + answer).ids)) return ConsistencyStatus::ConsistentWithPrefixSpace;
    return ConsistencyStatus::Inconsistent;
}

TEST(CheckConsistency, Fenwick) {
    const auto& tok = gpt2();
    const auto enc = tok.encode(kFenwick);
    const auto verdict = check_consistency(tok, enc, "1912");
    EXPECT_EQ(verdict.status, ConsistencyStatus::ConsistentWithPrefixSpace);
    EXPECT_EQ(verdict.standalone_ids, (std::vector<TokenId>{1129, 1065}));
    ASSERT_TRUE(verdict.location);
    EXPECT_EQ(tok.pieces(std::span(enc.ids).subspan(verdict.location->start, verdict.location->size())),
              std::vector<std::string>{"Ġ1912"});
}

TEST(CheckConsistency, AnswerEqualsContext) {
    const auto& tok = gpt2();
    const auto enc = tok.encode("Denver Broncos");
    const auto verdict = check_consistency(tok, enc, "Denver Broncos");
    EXPECT_EQ(verdict.status, ConsistencyStatus::ConsistentRaw);
    EXPECT_EQ(verdict.location, (TokenSpan{0, enc.size()}));
    EXPECT_THROW(check_consistency(tok, enc, ""), Error);
}

TEST(CheckConsistency, MatchesBruteForceOnToyCases) {
    const auto& tok = gpt2();
    const std::vector<std::pair<std::string, std::string>> cases = {
        {kFenwick, "1912"},
        {kFenwick, "Fenwick"},
        {kFenwick, "Fenwick Hall"},
        {kFenwick, "campus"},
        {kFenwick, "Hall,"},
        {"It cost $5,000,000 in total.", "$5,000,000"},
        {"It cost $5,000,000 in total.", "5,000,000"},
        {"the \"Crash the Super Bowl\" contest", "Crash the Super Bowl"},
        {"(14 October 1066)", "14 October 1066"},
        {"Oxygen is element 8.", "xyge"},
    };
    for (const auto& [context, answer] : cases) {
        const auto enc = tok.encode(context);
        EXPECT_EQ(check_consistency(tok, enc, answer).status, brute_force_status(tok, enc, answer)) << answer;
    }
}

TEST(MakeConsistentTarget, Fenwick) {
    const auto& tok = gpt2();
    const auto enc = tok.encode(kFenwick);
    const std::size_t at = kFenwick.find("1912");
    const auto out = make_consistent_target(tok, kFenwick, enc, "1912", CharSpan{at, at + 3, true});
    EXPECT_EQ(out.method, FixMethod::ExpandedSlice);
    EXPECT_EQ(out.target_ids, std::vector<TokenId>{34463});
    EXPECT_EQ(tok.decode(out.target_ids), " 1912");
    // Without a gold span the prefixed variant is found by search.
    const auto searched = make_consistent_target(tok, kFenwick, enc, "1912", std::nullopt);
    EXPECT_EQ(searched.method, FixMethod::SubsequenceSearch);
    EXPECT_EQ(searched.target_ids, std::vector<TokenId>{34463});
}

TEST(MakeConsistentTarget, LadderSteps) {
    const auto& tok = gpt2();
    {
        const std::string ctx = "Super Bowl 50";
        const auto out = make_consistent_target(tok, ctx, tok.encode(ctx), ctx, CharSpan{0, 12, true});
        EXPECT_EQ(out.method, FixMethod::AlreadyConsistent);
        EXPECT_EQ(out.context_span, (TokenSpan{0, 3}));
    }
    {
        // The span includes the preceding space, so token boundaries match exactly.
        const auto enc = tok.encode(kFenwick);
        const std::size_t at = kFenwick.find(" 1912");
        const auto out = make_consistent_target(tok, kFenwick, enc, " 1912", CharSpan{at, at + 4, true});
        EXPECT_EQ(out.method, FixMethod::AlreadyConsistent);
    }
    {
        const std::string ctx = "Oxygen is element 8.";
        const auto enc = tok.encode(ctx);
        const auto out = make_consistent_target(tok, ctx, enc, "xyge", CharSpan{1, 4, true});
        EXPECT_EQ(out.method, FixMethod::Unresolved);
        EXPECT_EQ(out.target_ids, tok.encode("xyge").ids);
        EXPECT_FALSE(out.context_span);
    }
    {
        const std::string ctx = "A cat. A cat.";
        const auto enc = tok.encode(ctx);
        EXPECT_THROW(make_consistent_target(tok, ctx, enc, "dog", CharSpan{2, 4, true}), Error);
        EXPECT_THROW(make_consistent_target(tok, ctx, enc, "", std::nullopt), Error);
        // Trailing whitespace differences are tolerated.
        EXPECT_NO_THROW(make_consistent_target(tok, ctx, enc, "cat ", CharSpan{2, 4, true}));
    }
}

TEST(MakeConsistentTarget, GoldLocationIsPreferred) {
    const auto& tok = gpt2();
    const std::string ctx = "Broncos won. The Broncos won again.";
    const auto enc = tok.encode(ctx);
    const std::size_t second = ctx.find("Broncos", 1);
    const auto out = make_consistent_target(tok, ctx, enc, "Broncos", CharSpan{second, second + 6, true});
    ASSERT_TRUE(out.context_span);
    EXPECT_EQ(token_span_bytes(enc, *out.context_span).end, second + 7);
}

// Whenever some context slice decodes to the answer, the ladder must find one,
// and every slice it returns must be faithful.
TEST(Property, ExhaustiveSliceGuarantee) {
    const auto& tok = gpt2();
    static const std::vector<std::string> words = {
        "Fenwick", "was", "founded", "in", "1912", ".", ",", "the", "Super", "Bowl", "50", "$5,000",
        "Doritos", "café", "(CNN)", "--", "1,000", "don't", "'s", "\"", "Broncos", "24–10", "O₂"};
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
    std::uniform_int_distribution<int> nwords(1, 18);
    std::uniform_int_distribution<int> coin(0, 3);
    int resolved = 0;
    for (int trial = 0; trial < 400; ++trial) {
        std::string ctx;
        for (int w = nwords(rng); w > 0; --w) {
            if (!ctx.empty() && coin(rng) != 0) ctx += ' ';
            ctx += words[word(rng)];
        }
        const auto cps = unicode::decode_utf8(ctx);
        std::uniform_int_distribution<std::size_t> pos(0, cps.size() - 1);
        std::size_t a = pos(rng);
        std::size_t b = pos(rng);
        if (a > b) std::swap(a, b);
        const std::size_t begin = cps[a].byte_offset;
        const std::size_t end = cps[b].byte_offset + cps[b].byte_length;
        const std::string answer = ctx.substr(begin, end - begin);
        if (ascii_strip(answer).empty()) continue;

        const auto enc = tok.encode(ctx);
        const auto out = make_consistent_target(tok, ctx, enc, answer, CharSpan{a, b, true});
        const bool exists = some_slice_decodes_to(tok, enc, answer);
        if (out.method == FixMethod::Unresolved) {
            EXPECT_FALSE(exists) << "context '" << ctx << "' answer '" << answer << "'";
            continue;
        }
        ++resolved;
        ASSERT_TRUE(out.context_span);
        const std::vector<TokenId> slice(enc.ids.begin() + static_cast<std::ptrdiff_t>(out.context_span->start),
                                         enc.ids.begin() + static_cast<std::ptrdiff_t>(out.context_span->end));
        EXPECT_EQ(out.target_ids, slice);
        EXPECT_EQ(ascii_strip(tok.decode(out.target_ids)), ascii_strip(answer))
            << "context '" << ctx << "' answer '" << answer << "' via " << to_string(out.method);
    }
    EXPECT_GT(resolved, 100);
}

TEST(AnalyzeDataset, EmptyStream) {
    const std::vector<ExtractiveExample> none;
    const auto stats = analyze_dataset(gpt2(), source_from(none));
    EXPECT_EQ(stats.total, 0u);
    EXPECT_EQ(stats.pct_inconsistent_raw(), 0.0);
    EXPECT_EQ(stats.pct_inconsistent_after_prefix(), 0.0);
}

TEST(AnalyzeDataset, RepairCorpusStats) {
    const auto examples = load("repair_corpus.jsonl");
    ASSERT_EQ(examples.size(), 50u);
    AnalyzeOptions opts;
    opts.keep_verdicts = true;
    const auto stats = analyze_dataset(gpt2(), source_from(examples), opts);
    EXPECT_EQ(stats.total, 50u);
    EXPECT_EQ(stats.consistent_raw + stats.consistent_prefix_only + stats.inconsistent, stats.total);
    EXPECT_LE(stats.pct_inconsistent_after_prefix(), stats.pct_inconsistent_raw());
    EXPECT_GT(stats.consistent_prefix_only, 20u);
    ASSERT_EQ(stats.verdicts.size(), 50u);
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto enc = gpt2().encode(examples[i].context);
        EXPECT_EQ(stats.verdicts[i].status, brute_force_status(gpt2(), enc, *examples[i].primary_answer()))
            << examples[i].qid;
    }

    opts.policy = AnswerPolicy::Any;
    const auto any = analyze_dataset(gpt2(), source_from(examples), opts);
    EXPECT_LE(any.inconsistent, stats.inconsistent);
    EXPECT_LE(any.pct_inconsistent_raw(), stats.pct_inconsistent_raw());
}

TEST(AnalyzeDataset, SamplingIsSeededAndWorkerIndependent) {
    const auto examples = load("repair_corpus.jsonl");
    AnalyzeOptions opts;
    opts.sample_size = 20;
    opts.keep_verdicts = true;
    const auto a = analyze_dataset(gpt2(), source_from(examples), opts);
    opts.workers = 4;
    const auto b = analyze_dataset(gpt2(), source_from(examples), opts);
    ASSERT_EQ(a.total, 20u);
    ASSERT_EQ(a.verdicts.size(), b.verdicts.size());
    for (std::size_t i = 0; i < a.verdicts.size(); ++i) EXPECT_EQ(a.verdicts[i].qid, b.verdicts[i].qid);

    opts.seed = 7;
    const auto c = analyze_dataset(gpt2(), source_from(examples), opts);
    bool differs = false;
    for (std::size_t i = 0; i < c.verdicts.size(); ++i) differs |= c.verdicts[i].qid != a.verdicts[i].qid;
    EXPECT_TRUE(differs);

    opts.sample_size = 1000;
    EXPECT_EQ(analyze_dataset(gpt2(), source_from(examples), opts).total, 50u);
}

std::string fix_to_string(const std::vector<ExtractiveExample>& examples, std::size_t workers, FixSummary& summary) {
    std::ostringstream out;
    FixedDatasetWriter sink(out, DatasetHeader{"RepairFixture", {{"dataset", "RepairFixture"}}});
    summary = fix_dataset(gpt2(), source_from(examples), sink, FixOptions{workers});
    return out.str();
}

TEST(FixDataset, RepairCorpusInvariants) {
    const auto examples = load("repair_corpus.jsonl");
    FixSummary summary;
    const std::string serial = fix_to_string(examples, 1, summary);
    std::size_t counted = 0;
    for (const auto& [method, n] : summary.counts) counted += n;
    EXPECT_EQ(counted, summary.total);
    EXPECT_EQ(summary.total, 50u);
    EXPECT_EQ(summary.counts[FixMethod::Unresolved], 2u);
    EXPECT_GT(summary.counts[FixMethod::ExpandedSlice], 0u);
    EXPECT_GT(summary.counts[FixMethod::AlreadyConsistent], 0u);

    FixSummary parallel_summary;
    EXPECT_EQ(fix_to_string(examples, 4, parallel_summary), serial);
    EXPECT_EQ(parallel_summary.counts, summary.counts);

    std::istringstream in(serial);
    auto reader = DatasetReader(in);
    auto [header, fixed] = read_all(reader);
    ASSERT_EQ(fixed.size(), 50u);
    for (const auto& ex : fixed) {
        const auto enc = gpt2().encode(ex.context);
        const auto method = parse_fix_method(ex.qa_fields.at("fix_method").get<std::string>());
        ASSERT_TRUE(method);
        const auto target = ex.qa_fields.at("target_token_ids").get<std::vector<TokenId>>();
        if (*method == FixMethod::Unresolved) {
            EXPECT_TRUE(ex.qa_fields.at("context_token_span").is_null());
            continue;
        }
        const auto span = ex.qa_fields.at("context_token_span").get<std::vector<std::size_t>>();
        ASSERT_EQ(span.size(), 2u);
        ASSERT_LE(span[1], enc.size());
        const std::vector<TokenId> slice(enc.ids.begin() + static_cast<std::ptrdiff_t>(span[0]),
                                         enc.ids.begin() + static_cast<std::ptrdiff_t>(span[1]));
        EXPECT_EQ(target, slice) << ex.qid;
        EXPECT_TRUE(oracle::naive_find(enc.ids, target));
        EXPECT_EQ(ascii_strip(gpt2().decode(target)), ascii_strip(*ex.primary_answer())) << ex.qid;
    }
}

TEST(FixDataset, Fenwick) {
    const auto examples = load("fenwick.jsonl");
    ASSERT_EQ(examples.size(), 2u);
    const auto enc = gpt2().encode(examples[0].context);
    const auto fix = fix_example(gpt2(), examples[0], enc);
    EXPECT_EQ(fix.skipped, SkipReason::None);
    EXPECT_NE(fix.outcome.method, FixMethod::Unresolved);
    EXPECT_EQ(gpt2().pieces(fix.outcome.target_ids), std::vector<std::string>{"Ġ1912"});
    EXPECT_EQ(fix_example(gpt2(), examples[1], enc).outcome.method, FixMethod::AlreadyConsistent);
}

}  // namespace
}  // namespace consistok
