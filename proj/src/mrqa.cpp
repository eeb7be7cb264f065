#include "consistok/mrqa.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <zlib.h>

#include "consistok/error.hpp"
#include "consistok/unicode.hpp"

namespace consistok {

const char* to_string(FixMethod method) noexcept {
    switch (method) {
        case FixMethod::AlreadyConsistent: return "already_consistent";
        case FixMethod::ExactSlice: return "exact_slice";
        case FixMethod::ExpandedSlice: return "expanded_slice";
        case FixMethod::SubsequenceSearch: return "subsequence_search";
        case FixMethod::Unresolved: return "unresolved";
    }
    return "?";
}

std::optional<FixMethod> parse_fix_method(std::string_view name) noexcept {
    for (const FixMethod m : kAllFixMethods) {
        if (name == to_string(m)) return m;
    }
    return std::nullopt;
}

namespace detail {

/// Yields lines from a plain or gzip-compressed byte stream.
class LineSource {
public:
    LineSource(std::istream& in, std::optional<bool> gzip) : in_(in) {
        fill_raw();
        const bool magic = raw_len_ >= 2 && static_cast<unsigned char>(raw_[0]) == 0x1f &&
                           static_cast<unsigned char>(raw_[1]) == 0x8b;
        gzip_ = gzip.value_or(magic);
        if (gzip_) {
            // 15 + 32: zlib or gzip wrapper, detected from the stream.
            if (inflateInit2(&zs_, 15 + 32) != Z_OK) throw Error(ErrorKind::Io, "inflateInit failed");
            zs_initialized_ = true;
        }
    }

    ~LineSource() {
        if (zs_initialized_) inflateEnd(&zs_);
    }

    LineSource(const LineSource&) = delete;
    LineSource& operator=(const LineSource&) = delete;

    bool getline(std::string& line) {
        for (;;) {
            const auto nl = buffer_.find('\n', std::max(scan_from_, line_start_));
            if (nl != std::string::npos) {
                line.assign(buffer_, line_start_, nl - line_start_);
                line_start_ = nl + 1;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
            buffer_.erase(0, line_start_);
            line_start_ = 0;
            scan_from_ = buffer_.size();
            if (!produce()) {
                if (buffer_.empty()) return false;
                line.swap(buffer_);
                buffer_.clear();
                scan_from_ = 0;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                return true;
            }
        }
    }

private:
    void fill_raw() {
        in_.read(raw_.data(), static_cast<std::streamsize>(raw_.size()));
        raw_len_ = static_cast<std::size_t>(in_.gcount());
        raw_pos_ = 0;
        if (in_.bad()) throw Error(ErrorKind::Io, "read failure");
    }

    // Appends more decoded bytes to buffer_; false at end of input.
    bool produce() {
        if (!gzip_) {
            if (raw_pos_ == raw_len_) fill_raw();
            if (raw_len_ == 0) return false;
            buffer_.append(raw_.data() + raw_pos_, raw_len_ - raw_pos_);
            raw_pos_ = raw_len_;
            return true;
        }
        std::array<char, 1 << 16> out{};
        for (;;) {
            if (raw_pos_ == raw_len_) {
                fill_raw();
                if (raw_len_ == 0) {
                    if (!stream_ended_) throw Error(ErrorKind::Data, "truncated gzip stream");
                    return false;
                }
            }
            if (stream_ended_) {
                // Concatenated gzip members.
                inflateReset(&zs_);
                stream_ended_ = false;
            }
            zs_.next_in = reinterpret_cast<Bytef*>(raw_.data() + raw_pos_);
            zs_.avail_in = static_cast<uInt>(raw_len_ - raw_pos_);
            zs_.next_out = reinterpret_cast<Bytef*>(out.data());
            zs_.avail_out = static_cast<uInt>(out.size());
            const int rc = inflate(&zs_, Z_NO_FLUSH);
            raw_pos_ = raw_len_ - zs_.avail_in;
            if (rc == Z_STREAM_END) {
                stream_ended_ = true;
            } else if (rc != Z_OK && rc != Z_BUF_ERROR) {
                throw Error(ErrorKind::Data, std::string("gzip decode error: ") + (zs_.msg ? zs_.msg : "unknown"));
            }
            const std::size_t produced = out.size() - zs_.avail_out;
            if (produced > 0) {
                buffer_.append(out.data(), produced);
                return true;
            }
        }
    }

    std::istream& in_;
    std::array<char, 1 << 16> raw_{};
    std::size_t raw_len_ = 0;
    std::size_t raw_pos_ = 0;
    bool gzip_ = false;
    z_stream zs_{};
    bool zs_initialized_ = false;
    bool stream_ended_ = false;
    std::string buffer_;
    std::size_t scan_from_ = 0;
    std::size_t line_start_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// ExtractiveExample

namespace {

std::string_view rstrip(std::string_view s) {
    const auto cps = unicode::decode_utf8(s);
    std::size_t end = s.size();
    for (auto it = cps.rbegin(); it != cps.rend() && unicode::is_python_space(it->value); ++it) {
        end = it->byte_offset;
    }
    return s.substr(0, end);
}

}  // namespace

std::optional<std::pair<const DetectedAnswer*, CharSpan>> ExtractiveExample::first_valid_span() const {
    for (const auto& answer : detected) {
        for (const auto& span : answer.spans) {
            if (span.matches_text) return std::make_pair(&answer, span.chars);
        }
    }
    return std::nullopt;
}

std::optional<std::string> ExtractiveExample::primary_answer() const {
    for (const auto& answer : detected) {
        if (!answer.text.empty()) return answer.text;
    }
    for (const auto& answer : gold_answers) {
        if (!answer.empty()) return answer;
    }
    return std::nullopt;
}

std::size_t ExtractiveExample::span_mismatches() const {
    std::size_t n = 0;
    for (const auto& answer : detected) {
        for (const auto& span : answer.spans) n += span.matches_text ? 0 : 1;
    }
    return n;
}

// ---------------------------------------------------------------------------
// DatasetReader

DatasetReader::DatasetReader(std::istream& in, ReadOptions options)
    : source_(std::make_unique<detail::LineSource>(in, options.gzip)), options_(options) {
    read_header();
}

DatasetReader::DatasetReader(std::unique_ptr<std::istream> owned, ReadOptions options)
    : owned_(std::move(owned)), source_(std::make_unique<detail::LineSource>(*owned_, options.gzip)),
      options_(options) {
    read_header();
}

DatasetReader::DatasetReader(DatasetReader&&) noexcept = default;
DatasetReader& DatasetReader::operator=(DatasetReader&&) noexcept = default;
DatasetReader::~DatasetReader() = default;

DatasetReader DatasetReader::open(const std::filesystem::path& path, ReadOptions options) {
    auto file = std::make_unique<std::ifstream>(path, std::ios::binary);
    if (!*file) throw Error(ErrorKind::Io, "cannot open dataset " + path.string());
    return DatasetReader(std::move(file), options);
}

void DatasetReader::read_header() {
    std::string line;
    while (source_->getline(line)) {
        ++line_no_;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::Data, "line " + std::to_string(line_no_) + ": malformed JSON: " + e.what());
        }
        if (!doc.is_object() || !doc.contains("header") || !doc["header"].is_object()) break;
        header_.fields = doc["header"];
        if (auto it = header_.fields.find("dataset"); it != header_.fields.end() && it->is_string()) {
            header_.dataset = it->get<std::string>();
        }
        return;
    }
    throw Error(ErrorKind::Data, "missing header");
}

bool DatasetReader::load_next_record() {
    std::string line;
    while (source_->getline(line)) {
        ++line_no_;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::Data, "line " + std::to_string(line_no_) + ": malformed JSON: " + e.what());
        }
        const std::size_t record = record_index_++;
        const auto issue = [&](std::string qid, std::string message) {
            issues_.push_back({line_no_, std::move(qid), std::move(message)});
        };
        if (!doc.is_object()) {
            issue("", "record is not a JSON object");
            continue;
        }
        const auto context_it = doc.find("context");
        const auto qas_it = doc.find("qas");
        if (context_it == doc.end() || !context_it->is_string()) {
            issue("", "missing field 'context'");
            continue;
        }
        if (qas_it == doc.end() || !qas_it->is_array()) {
            issue("", "missing field 'qas'");
            continue;
        }
        std::string context = context_it->get<std::string>();
        if (!unicode::is_valid_utf8(context)) {
            issue("", "context is not valid UTF-8");
            continue;
        }
        auto context_fields = std::make_shared<nlohmann::json>(doc);
        context_fields->erase("context");
        context_fields->erase("qas");

        for (auto& qa : *qas_it) {
            ExtractiveExample ex;
            const auto qid_it = qa.is_object() ? qa.find("qid") : qa.end();
            if (qid_it == qa.end() || !qid_it->is_string() || qid_it->get<std::string>().empty()) {
                issue("", "qa without 'qid'");
                continue;
            }
            ex.qid = qid_it->get<std::string>();
            if (!seen_qids_.insert(ex.qid).second) {
                issue(ex.qid, "duplicate qid");
                continue;
            }
            const auto question_it = qa.find("question");
            if (question_it == qa.end() || !question_it->is_string()) {
                issue(ex.qid, "missing field 'question'");
                continue;
            }
            ex.question = question_it->get<std::string>();
            const auto answers_it = qa.find("answers");
            if (answers_it == qa.end() || !answers_it->is_array()) {
                issue(ex.qid, "missing field 'answers'");
                continue;
            }
            bool well_formed = true;
            for (const auto& a : *answers_it) {
                if (!a.is_string()) {
                    well_formed = false;
                    break;
                }
                ex.gold_answers.push_back(a.get<std::string>());
            }
            if (const auto det_it = qa.find("detected_answers"); well_formed && det_it != qa.end()) {
                if (!det_it->is_array()) well_formed = false;
                for (const auto& d : well_formed ? *det_it : nlohmann::json::array()) {
                    const auto text_it = d.find("text");
                    const auto spans_it = d.find("char_spans");
                    if (!d.is_object() || text_it == d.end() || !text_it->is_string() || spans_it == d.end() ||
                        !spans_it->is_array()) {
                        well_formed = false;
                        break;
                    }
                    DetectedAnswer answer{text_it->get<std::string>(), {}};
                    for (const auto& s : *spans_it) {
                        if (!s.is_array() || s.size() != 2 || !s[0].is_number_unsigned() ||
                            !s[1].is_number_unsigned()) {
                            well_formed = false;
                            break;
                        }
                        DetectedSpan span{{s[0].get<std::size_t>(), s[1].get<std::size_t>(), options_.inclusive_end},
                                          false};
                        try {
                            const ByteRange bytes = codepoint_span_to_byte_span(context, span.chars);
                            const std::string_view at = std::string_view(context).substr(bytes.start, bytes.size());
                            span.matches_text = rstrip(at) == rstrip(answer.text);
                        } catch (const Error&) {
                            span.matches_text = false;
                        }
                        if (!span.matches_text) {
                            ++span_mismatches_;
                            issue(ex.qid, "char span [" + std::to_string(span.chars.start) + ", " +
                                              std::to_string(span.chars.end) + "] does not match answer '" +
                                              answer.text + "'");
                        }
                        answer.spans.push_back(span);
                    }
                    if (!well_formed) break;
                    ex.detected.push_back(std::move(answer));
                }
            }
            if (!well_formed) {
                issue(ex.qid, "malformed 'answers' or 'detected_answers'");
                continue;
            }
            ex.context = context;
            ex.record_index = record;
            ex.context_fields = context_fields;
            ex.qa_fields = std::move(qa);
            pending_.push_back(std::move(ex));
        }
        if (!pending_.empty()) return true;
    }
    return false;
}

std::optional<ExtractiveExample> DatasetReader::next() {
    while (pending_pos_ == pending_.size()) {
        pending_.clear();
        pending_pos_ = 0;
        if (!load_next_record()) return std::nullopt;
    }
    return std::move(pending_[pending_pos_++]);
}

std::pair<DatasetHeader, std::vector<ExtractiveExample>> read_all(DatasetReader& reader) {
    std::vector<ExtractiveExample> out;
    while (auto ex = reader.next()) out.push_back(std::move(*ex));
    return {reader.header(), std::move(out)};
}

// ---------------------------------------------------------------------------
// FixedDatasetWriter

FixedDatasetWriter::FixedDatasetWriter(std::ostream& out, const DatasetHeader& header) : out_(out) {
    nlohmann::json line = {{"header", header.fields}};
    out_ << line.dump() << '\n';
}

FixedDatasetWriter::~FixedDatasetWriter() {
    try {
        finish();
    } catch (...) {
    }
}

void FixedDatasetWriter::add(const ExtractiveExample& example, const FixOutcome& outcome) {
    if (record_index_ != example.record_index) {
        flush_record();
        record_ = example.context_fields ? *example.context_fields : nlohmann::json::object();
        record_["context"] = example.context;
        record_["qas"] = nlohmann::json::array();
        record_index_ = example.record_index;
    }
    nlohmann::json qa = example.qa_fields.is_object() ? example.qa_fields : nlohmann::json::object();
    qa["qid"] = example.qid;
    qa["question"] = example.question;
    qa["answers"] = example.gold_answers;
    qa["target_token_ids"] = outcome.target_ids;
    qa["fix_method"] = to_string(outcome.method);
    if (outcome.context_span) {
        qa["context_token_span"] = {outcome.context_span->start, outcome.context_span->end};
    } else {
        qa["context_token_span"] = nullptr;
    }
    record_["qas"].push_back(std::move(qa));
    ++count_;
}

void FixedDatasetWriter::flush_record() {
    if (!record_index_) return;
    out_ << record_.dump() << '\n';
    record_index_.reset();
    record_ = nullptr;
    if (!out_) throw Error(ErrorKind::Io, "write failure");
}

void FixedDatasetWriter::finish() {
    flush_record();
    out_.flush();
    if (!out_) throw Error(ErrorKind::Io, "write failure");
}

std::size_t write_fixed_dataset(std::ostream& out, const DatasetHeader& header,
                                std::span<const std::pair<ExtractiveExample, FixOutcome>> items) {
    FixedDatasetWriter writer(out, header);
    for (const auto& [example, outcome] : items) writer.add(example, outcome);
    writer.finish();
    return writer.count();
}

// ---------------------------------------------------------------------------
// Predictions

PredictionSet read_predictions(std::istream& in) {
    std::set<std::string> seen;
    std::optional<std::string> duplicate;
    const nlohmann::json::parser_callback_t track_keys = [&](int depth, nlohmann::json::parse_event_t event,
                                                             nlohmann::json& parsed) {
        if (event == nlohmann::json::parse_event_t::key && depth == 1 && parsed.is_string()) {
            if (!seen.insert(parsed.get<std::string>()).second && !duplicate) {
                duplicate = parsed.get<std::string>();
            }
        }
        return true;
    };
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in, track_keys);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Data, std::string("malformed predictions JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::Data, "predictions must be a JSON object of qid -> answer");
    if (duplicate) throw Error(ErrorKind::Data, "duplicate prediction for qid '" + *duplicate + "'");

    PredictionSet out;
    for (const auto& [qid, value] : doc.items()) {
        if (!value.is_string()) throw Error(ErrorKind::Data, "prediction for '" + qid + "' is not a string");
        out.emplace(qid, value.get<std::string>());
    }
    return out;
}

PredictionSet read_predictions_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open predictions " + path.string());
    return read_predictions(in);
}

}  // namespace consistok
