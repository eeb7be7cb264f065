#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "consistok/align.hpp"
#include "consistok/fix_outcome.hpp"

namespace consistok {

struct DetectedSpan {
    CharSpan chars;
    /// Context text at `chars` equals the answer text up to trailing whitespace.
    bool matches_text = false;
};

struct DetectedAnswer {
    std::string text;
    std::vector<DetectedSpan> spans;
};

/// One (context, question) pair of an MRQA record.
struct ExtractiveExample {
    std::string qid;
    std::string context;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<DetectedAnswer> detected;

    /// 0-based index of the context record this example came from.
    std::size_t record_index = 0;
    /// Context-level fields other than `context` and `qas`, passed through on write.
    std::shared_ptr<const nlohmann::json> context_fields;
    /// The original qa object, passed through on write.
    nlohmann::json qa_fields;

    /// First detected (answer, span) whose span validated against the context.
    std::optional<std::pair<const DetectedAnswer*, CharSpan>> first_valid_span() const;
    /// First detected answer text, falling back to the first gold answer.
    std::optional<std::string> primary_answer() const;
    std::size_t span_mismatches() const;
};

struct DatasetHeader {
    std::string dataset;
    /// The full header object.
    nlohmann::json fields = nlohmann::json::object();
};

struct ReadOptions {
    /// Force (true) or forbid (false) gzip; unset detects by magic bytes.
    std::optional<bool> gzip;
    /// Whether `char_spans` end indices are inclusive (MRQA releases) or exclusive.
    bool inclusive_end = true;
};

/// A per-record problem that did not stop the stream.
struct RecordIssue {
    std::size_t line = 0;
    std::string qid;
    std::string message;
};

namespace detail {
class LineSource;
}

/// Streaming reader over line-delimited MRQA JSON, optionally gzip-compressed.
/// Memory use is bounded by the largest single line.
class DatasetReader {
public:
    /// Reads from `in`, which must outlive the reader. Reads the header
    /// immediately; throws Error(Data) "missing header" when absent.
    DatasetReader(std::istream& in, ReadOptions options = {});
    /// Opens `path`; throws Error(Io) when unreadable.
    static DatasetReader open(const std::filesystem::path& path, ReadOptions options = {});

    DatasetReader(DatasetReader&&) noexcept;
    DatasetReader& operator=(DatasetReader&&) noexcept;
    ~DatasetReader();

    const DatasetHeader& header() const noexcept { return header_; }

    /// Next example in file order, or nullopt at end of input. Malformed JSON
    /// throws Error(Data) naming the line; other problems become issues().
    std::optional<ExtractiveExample> next();

    const std::vector<RecordIssue>& issues() const noexcept { return issues_; }
    std::size_t span_mismatches() const noexcept { return span_mismatches_; }
    std::size_t lines_read() const noexcept { return line_no_; }

private:
    DatasetReader(std::unique_ptr<std::istream> owned, ReadOptions options);
    void read_header();
    bool load_next_record();

    std::unique_ptr<std::istream> owned_;
    std::unique_ptr<detail::LineSource> source_;
    ReadOptions options_;
    DatasetHeader header_;
    std::vector<RecordIssue> issues_;
    std::size_t span_mismatches_ = 0;
    std::size_t line_no_ = 0;
    std::size_t record_index_ = 0;
    std::unordered_set<std::string> seen_qids_;
    std::vector<ExtractiveExample> pending_;
    std::size_t pending_pos_ = 0;
};

/// Reads every example; convenience for small files and tests.
std::pair<DatasetHeader, std::vector<ExtractiveExample>> read_all(DatasetReader& reader);

/// Writes repaired MRQA records: the header line, then one line per context
/// record holding its qas, each augmented with `target_token_ids`,
/// `fix_method` and `context_token_span`. Consecutive examples sharing a
/// record_index are grouped back into one line.
class FixedDatasetWriter {
public:
    FixedDatasetWriter(std::ostream& out, const DatasetHeader& header);
    FixedDatasetWriter(const FixedDatasetWriter&) = delete;
    FixedDatasetWriter& operator=(const FixedDatasetWriter&) = delete;
    ~FixedDatasetWriter();

    void add(const ExtractiveExample& example, const FixOutcome& outcome);
    /// Flushes the pending record. Throws Error(Io) on stream failure.
    void finish();
    std::size_t count() const noexcept { return count_; }

private:
    void flush_record();

    std::ostream& out_;
    std::optional<std::size_t> record_index_;
    nlohmann::json record_;
    std::size_t count_ = 0;
};

std::size_t write_fixed_dataset(std::ostream& out, const DatasetHeader& header,
                                std::span<const std::pair<ExtractiveExample, FixOutcome>> items);

/// qid -> predicted answer text.
using PredictionSet = std::map<std::string, std::string>;

/// Parses a single JSON object mapping qid to answer string. Rejects
/// malformed JSON, non-string values and duplicate keys with Error(Data).
PredictionSet read_predictions(std::istream& in);
PredictionSet read_predictions_file(const std::filesystem::path& path);

}  // namespace consistok
