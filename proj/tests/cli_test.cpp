#include "cli.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace consistok::cli {
namespace {

using testing::data_path;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "consistok");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::vector<std::string> with_tokenizer(std::vector<std::string> args) {
    args.insert(args.begin() + 1, {"--vocab", data_path("gpt2/vocab.json").string(), "--merges",
                                   data_path("gpt2/merges.txt").string()});
    return args;
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("consistok_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::create_directories(dir_);
    }
    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::string path(std::string_view name) const { return (dir_ / name).string(); }
    void write(std::string_view name, const std::string& content) const {
        std::ofstream(dir_ / name, std::ios::binary) << content;
    }
    std::string read(std::string_view name) const {
        std::ifstream in(dir_ / name, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }

    std::filesystem::path dir_;
};

TEST(Cli, UsageErrors) {
    EXPECT_EQ(invoke({}).code, kUsageError);
    EXPECT_EQ(invoke({"frobnicate"}).code, kUsageError);
    EXPECT_EQ(invoke({"analyze", "--vocab", data_path("gpt2/vocab.json").string(), "--dataset",
                      data_path("fenwick.jsonl").string()})
                  .code,
              kUsageError);
    EXPECT_EQ(invoke(with_tokenizer({"analyze", "--dataset", data_path("fenwick.jsonl").string(), "--workers", "0"}))
                  .code,
              kUsageError);
    EXPECT_EQ(invoke(with_tokenizer({"fix"})).code, kUsageError);
    EXPECT_EQ(invoke({"--help"}).code, kSuccess);
}

TEST(Cli, IoAndDataErrors) {
    EXPECT_EQ(invoke({"analyze", "--vocab", "/nonexistent/v.json", "--merges", "/nonexistent/m.txt", "--dataset",
                      data_path("fenwick.jsonl").string()})
                  .code,
              kIoError);
    EXPECT_EQ(invoke(with_tokenizer({"analyze", "--dataset", "/nonexistent/d.jsonl"})).code, kIoError);
    // merges.txt parses as a dataset without a header line.
    EXPECT_EQ(invoke(with_tokenizer({"analyze", "--dataset", data_path("gpt2/merges.txt").string()})).code,
              kDataError);
}

TEST_F(TempDir, AnalyzeEmptyDataset) {
    write("empty.jsonl", "{\"header\": {\"dataset\": \"Empty\"}}\n");
    const auto r = invoke(with_tokenizer({"analyze", "--dataset", path("empty.jsonl")}));
    ASSERT_EQ(r.code, kSuccess) << r.err;
    const auto report = nlohmann::json::parse(r.out);
    EXPECT_TRUE(report.contains("tool_version"));
    EXPECT_EQ(report["stats"][0]["total"], 0);
    EXPECT_EQ(report["stats"][0]["pct_inconsistent_raw"], 0.0);
}

TEST(Cli, AnalyzeReportIsWorkerIndependent) {
    const auto base = with_tokenizer({"analyze", "--dataset", data_path("repair_corpus.jsonl").string(), "--dataset",
                                      data_path("fenwick.jsonl").string(), "--per-example"});
    auto parallel = base;
    parallel.insert(parallel.end(), {"--workers", "4"});
    const auto a = invoke(base);
    const auto b = invoke(parallel);
    const auto c = invoke(base);
    ASSERT_EQ(a.code, kSuccess) << a.err;
    EXPECT_EQ(a.out, b.out);
    EXPECT_EQ(a.out, c.out);
    const auto report = nlohmann::json::parse(a.out);
    ASSERT_EQ(report["stats"].size(), 2u);
    for (const auto& s : report["stats"]) {
        EXPECT_LE(s["pct_inconsistent_after_prefix"].get<double>(), s["pct_inconsistent_raw"].get<double>());
    }
    EXPECT_EQ(report["stats"][1]["dataset"], "Fenwick");

    auto tsv = base;
    tsv.insert(tsv.end(), {"--format", "tsv"});
    const auto t = invoke(tsv);
    ASSERT_EQ(t.code, kSuccess);
    EXPECT_EQ(t.out.rfind("dataset\t", 0), 0u);
}

TEST_F(TempDir, FixWritesDatasetAndSummary) {
    const auto r = invoke(with_tokenizer({"fix", "--dataset", data_path("repair_corpus.jsonl").string(), "--output",
                                          path("fixed.jsonl"), "--summary", path("summary.json")}));
    ASSERT_EQ(r.code, kSuccess) << r.err;
    const auto summary = nlohmann::json::parse(read("summary.json"));
    EXPECT_EQ(summary["summary"]["total"], 50);
    std::size_t counted = 0;
    for (const auto& [method, n] : summary["summary"]["counts"].items()) counted += n.get<std::size_t>();
    EXPECT_EQ(counted, 50u);

    const auto again = invoke(with_tokenizer({"fix", "--dataset", data_path("repair_corpus.jsonl").string(), "--workers",
                                              "3", "--output", path("fixed2.jsonl"), "--summary",
                                              path("summary2.json")}));
    ASSERT_EQ(again.code, kSuccess);
    EXPECT_EQ(read("fixed.jsonl"), read("fixed2.jsonl"));
    EXPECT_EQ(read("summary.json"), read("summary2.json"));
}

TEST_F(TempDir, EvaluateReportsAndSignificance) {
    const auto gold = data_path("metrics_gold.jsonl").string();
    const auto preds = data_path("metrics_preds.json").string();
    const auto one = invoke({"evaluate", "--dataset", gold, "--predictions", preds});
    ASSERT_EQ(one.code, kSuccess) << one.err;
    EXPECT_NE(one.err.find("unknown qid 'not-a-question'"), std::string::npos);
    const auto report = nlohmann::json::parse(one.out);
    EXPECT_EQ(report["metrics"][0]["n"], 20);
    EXPECT_EQ(report["metrics"][0]["missing_predictions"], 1);
    EXPECT_FALSE(report.contains("significance"));

    std::filesystem::copy_file(preds, path("copy.json"), std::filesystem::copy_options::overwrite_existing);
    const auto two = invoke({"evaluate", "--dataset", gold, "--predictions", preds, "--predictions", path("copy.json")});
    ASSERT_EQ(two.code, kSuccess) << two.err;
    const auto paired = nlohmann::json::parse(two.out);
    EXPECT_EQ(paired["significance"]["p_value"], 1.0);

    EXPECT_EQ(invoke({"evaluate", "--dataset", gold}).code, kUsageError);
    write("bad.json", "{\"m00\": 3}");
    EXPECT_EQ(invoke({"evaluate", "--dataset", gold, "--predictions", path("bad.json")}).code, kDataError);
}

TEST(Cli, InspectFenwick) {
    const auto r = invoke(with_tokenizer({"inspect", "--dataset", data_path("fenwick.jsonl").string(), "--qid", "fw1"}));
    ASSERT_EQ(r.code, kSuccess) << r.err;
    EXPECT_NE(r.out.find("\"19\""), std::string::npos);
    EXPECT_NE(r.out.find("\"12\""), std::string::npos);
    EXPECT_NE(r.out.find("\"Ġ1912\""), std::string::npos);
    EXPECT_NE(r.out.find("verdict:   consistent_with_prefix_space"), std::string::npos);
    EXPECT_NE(r.out.find("repair:    expanded_slice"), std::string::npos);

    const auto consistent =
        invoke(with_tokenizer({"inspect", "--dataset", data_path("fenwick.jsonl").string(), "--qid", "fw1-start"}));
    EXPECT_NE(consistent.out.find("repair:    already_consistent"), std::string::npos);

    const auto missing =
        invoke(with_tokenizer({"inspect", "--dataset", data_path("fenwick.jsonl").string(), "--qid", "nope"}));
    EXPECT_EQ(missing.code, kDataError);
    EXPECT_NE(missing.err.find("nope"), std::string::npos);
}

TEST(Cli, TokenizeFenwickSentence) {
    const auto r = invoke(with_tokenizer({"tokenize", "--text", "Fenwick was founded in 1912."}));
    ASSERT_EQ(r.code, kSuccess) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["ids"], nlohmann::json({37, 268, 16239, 373, 9393, 287, 34463, 13}));
    EXPECT_EQ(j["pieces"][6], "Ġ1912");
}

}  // namespace
}  // namespace consistok::cli
