#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace consistok::cli {

/// Stable process exit codes.
enum ExitCode : int {
    kSuccess = 0,
    kUsageError = 1,
    kDataError = 2,
    kIoError = 3,
};

enum class OutputFormat { Json, Tsv };

struct RunConfig {
    std::string subcommand;
    std::string vocab_path;
    std::string merges_path;
    std::vector<std::string> dataset_paths;
    std::vector<std::string> prediction_paths;
    std::string output_path;   // empty: standard output
    std::string summary_path;  // fix only; empty: stdout when --output is set, else stderr
    OutputFormat format = OutputFormat::Json;
    std::optional<std::size_t> sample_size;
    std::uint64_t seed = 42;
    std::string answer_policy = "first";
    std::optional<bool> gzip;
    bool exclusive_spans = false;
    std::size_t workers = 1;
    std::size_t resamples = 10000;
    bool per_example = false;
    std::string qid;
    std::string text;  // tokenize only
};

/// Parses argv into a RunConfig. On failure prints usage to `err` and returns nullopt.
std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
                                    int& exit_code);

/// Runs a parsed configuration; data goes to `out` (or --output), diagnostics to `err`.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// parse_args + run.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace consistok::cli
