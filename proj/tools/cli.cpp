#include "cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "consistok/consist.hpp"
#include "consistok/error.hpp"
#include "consistok/metrics.hpp"
#include "consistok/mrqa.hpp"
#include "consistok/unicode.hpp"

namespace consistok::cli {
namespace {

using nlohmann::ordered_json;

constexpr const char* kToolVersion = CONSISTOK_VERSION;

// Output target: --output file when given, else the supplied stream.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) throw Error(ErrorKind::Io, "cannot open output " + path);
            stream_ = &file_;
        }
    }

    std::ostream& stream() { return *stream_; }

    void close() {
        stream_->flush();
        if (!*stream_) throw Error(ErrorKind::Io, "write failure");
        if (file_.is_open()) file_.close();
    }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

void require(bool ok, const std::string& message) {
    if (!ok) throw Error(ErrorKind::Usage, message);
}

ordered_json config_json(const RunConfig& c) {
    // No worker count: reports are identical for any --workers.
    ordered_json j;
    j["subcommand"] = c.subcommand;
    if (!c.vocab_path.empty()) j["vocab"] = c.vocab_path;
    if (!c.merges_path.empty()) j["merges"] = c.merges_path;
    j["datasets"] = c.dataset_paths;
    if (!c.prediction_paths.empty()) j["predictions"] = c.prediction_paths;
    if (c.sample_size) j["sample"] = *c.sample_size;
    j["seed"] = c.seed;
    j["answer_policy"] = c.answer_policy;
    j["span_convention"] = c.exclusive_spans ? "exclusive" : "inclusive";
    if (c.subcommand == "evaluate") j["resamples"] = c.resamples;
    return j;
}

ReadOptions read_options(const RunConfig& c) {
    ReadOptions o;
    o.gzip = c.gzip;
    o.inclusive_end = !c.exclusive_spans;
    return o;
}

Tokenizer load_tokenizer(const RunConfig& c) {
    require(!c.vocab_path.empty(), "--vocab is required");
    require(!c.merges_path.empty(), "--merges is required");
    return Tokenizer::load_files(c.vocab_path, c.merges_path);
}

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

void report_issues(const DatasetReader& reader, const std::string& path, std::ostream& err) {
    if (!reader.issues().empty()) {
        err << path << ": " << reader.issues().size() << " record issue(s), " << reader.span_mismatches()
            << " span mismatch(es)\n";
    }
}

// ---------------------------------------------------------------------------

int cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(!c.dataset_paths.empty(), "analyze needs at least one --dataset");
    const Tokenizer tok = load_tokenizer(c);

    AnalyzeOptions options;
    options.sample_size = c.sample_size;
    options.seed = c.seed;
    options.policy = c.answer_policy == "any" ? AnswerPolicy::Any : AnswerPolicy::First;
    options.workers = c.workers;
    options.keep_verdicts = c.per_example;

    ordered_json stats = ordered_json::array();
    ordered_json per_example = ordered_json::array();
    std::vector<std::vector<std::string>> rows;
    for (const auto& path : c.dataset_paths) {
        DatasetReader reader = DatasetReader::open(path, read_options(c));
        const ConsistencyStats s = analyze_dataset(tok, source_from(reader), options);
        report_issues(reader, path, err);
        if (s.pct_inconsistent_after_prefix() > s.pct_inconsistent_raw()) {
            throw Error(ErrorKind::Data, "internal: after-prefix rate exceeds raw rate");
        }
        const std::string name = reader.header().dataset.empty() ? path : reader.header().dataset;
        ordered_json j;
        j["dataset"] = name;
        j["path"] = path;
        j["total"] = s.total;
        j["consistent_raw"] = s.consistent_raw;
        j["consistent_prefix_only"] = s.consistent_prefix_only;
        j["inconsistent"] = s.inconsistent;
        j["skipped"] = s.skipped;
        j["pct_inconsistent_raw"] = s.pct_inconsistent_raw();
        j["pct_inconsistent_after_prefix"] = s.pct_inconsistent_after_prefix();
        j["span_mismatches"] = reader.span_mismatches();
        j["record_issues"] = reader.issues().size();
        stats.push_back(j);
        for (const auto& v : s.verdicts) {
            per_example.push_back({{"dataset", name}, {"qid", v.qid}, {"status", to_string(v.status)}});
        }
        rows.push_back({name, std::to_string(s.total), std::to_string(s.consistent_raw),
                        std::to_string(s.consistent_prefix_only), std::to_string(s.inconsistent),
                        fixed(s.pct_inconsistent_raw(), 2), fixed(s.pct_inconsistent_after_prefix(), 2)});
    }

    Sink sink(c.output_path, out);
    if (c.format == OutputFormat::Tsv) {
        sink.stream() << "dataset\ttotal\tconsistent_raw\tconsistent_prefix_only\tinconsistent\t"
                         "pct_inconsistent_raw\tpct_inconsistent_after_prefix\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) sink.stream() << (i ? "\t" : "") << row[i];
            sink.stream() << '\n';
        }
    } else {
        ordered_json report;
        report["tool_version"] = kToolVersion;
        report["config"] = config_json(c);
        report["stats"] = stats;
        if (c.per_example) report["per_example"] = per_example;
        sink.stream() << report.dump(2) << '\n';
    }
    sink.close();
    return kSuccess;
}

int cmd_fix(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.dataset_paths.size() == 1, "fix takes exactly one --dataset");
    const Tokenizer tok = load_tokenizer(c);
    DatasetReader reader = DatasetReader::open(c.dataset_paths.front(), read_options(c));

    Sink data(c.output_path, out);
    FixedDatasetWriter writer(data.stream(), reader.header());
    FixOptions options;
    options.workers = c.workers;
    const FixSummary summary = fix_dataset(tok, source_from(reader), writer, options);
    data.close();
    report_issues(reader, c.dataset_paths.front(), err);

    ordered_json counts;
    for (const auto& [method, n] : summary.counts) counts[to_string(method)] = n;
    ordered_json report;
    report["tool_version"] = kToolVersion;
    report["config"] = config_json(c);
    report["summary"] = {{"total", summary.total},
                         {"counts", counts},
                         {"skipped_span_mismatch", summary.skipped_span_mismatch},
                         {"skipped_no_answer", summary.skipped_no_answer}};

    // Fixed records own stdout when no --output is given.
    std::ostream& fallback = c.output_path.empty() ? err : out;
    Sink summary_sink(c.summary_path, fallback);
    if (c.format == OutputFormat::Tsv) {
        summary_sink.stream() << "method\tcount\n";
        for (const auto& [method, n] : summary.counts) summary_sink.stream() << to_string(method) << '\t' << n << '\n';
        summary_sink.stream() << "skipped_span_mismatch\t" << summary.skipped_span_mismatch << '\n'
                              << "skipped_no_answer\t" << summary.skipped_no_answer << '\n';
    } else {
        summary_sink.stream() << report.dump(2) << '\n';
    }
    summary_sink.close();
    return kSuccess;
}

ordered_json metrics_json(const std::string& path, const MetricsReport& m) {
    ordered_json j;
    j["predictions"] = path;
    j["n"] = m.n;
    j["em"] = m.em;
    j["f1"] = m.f1;
    j["predicted"] = m.predicted;
    j["missing_predictions"] = m.missing_predictions;
    j["unknown_predictions"] = m.unknown_qids.size();
    j["hallucination_rate"] = m.hallucination_rate;
    j["hallucination_rate_normalized"] = m.hallucination_rate_normalized;
    j["hallucinated_qids"] = m.hallucinated_qids;
    return j;
}

int cmd_evaluate(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.dataset_paths.size() == 1, "evaluate takes exactly one --dataset");
    require(!c.prediction_paths.empty() && c.prediction_paths.size() <= 2,
            "evaluate takes one or two --predictions files");

    DatasetReader reader = DatasetReader::open(c.dataset_paths.front(), read_options(c));
    std::vector<ExtractiveExample> examples;
    while (auto ex = reader.next()) examples.push_back(std::move(*ex));
    report_issues(reader, c.dataset_paths.front(), err);

    EvaluateOptions options;
    options.workers = c.workers;
    std::vector<MetricsReport> reports;
    for (const auto& path : c.prediction_paths) {
        const PredictionSet preds = read_predictions_file(path);
        reports.push_back(evaluate(preds, source_from(examples), options));
        for (const auto& qid : reports.back().unknown_qids) {
            err << "warning: " << path << ": prediction for unknown qid '" << qid << "' ignored\n";
        }
    }

    std::optional<SignificanceResult> significance;
    if (reports.size() == 2) {
        std::vector<double> a;
        std::vector<double> b;
        for (const auto& s : reports[0].per_example) a.push_back(s.f1);
        for (const auto& s : reports[1].per_example) b.push_back(s.f1);
        significance = paired_significance(a, b, c.resamples, c.seed, c.workers);
    }

    Sink sink(c.output_path, out);
    if (c.format == OutputFormat::Tsv) {
        sink.stream() << "predictions\tn\tem\tf1\tmissing\thallucination_rate\n";
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& m = reports[i];
            sink.stream() << c.prediction_paths[i] << '\t' << m.n << '\t' << fixed(m.em, 2) << '\t' << fixed(m.f1, 2)
                          << '\t' << m.missing_predictions << '\t' << fixed(m.hallucination_rate, 2) << '\n';
        }
        if (significance) {
            sink.stream() << "# paired sign-flip on F1: p=" << significance->p_value
                          << " mean_diff=" << significance->statistic << '\n';
        }
    } else {
        ordered_json report;
        report["tool_version"] = kToolVersion;
        report["config"] = config_json(c);
        ordered_json metrics = ordered_json::array();
        for (std::size_t i = 0; i < reports.size(); ++i) metrics.push_back(metrics_json(c.prediction_paths[i], reports[i]));
        report["metrics"] = metrics;
        if (significance) {
            report["significance"] = {{"metric", "f1"},
                                      {"test", "paired_sign_flip"},
                                      {"p_value", significance->p_value},
                                      {"statistic", significance->statistic},
                                      {"resamples", significance->resamples},
                                      {"exact", significance->exact},
                                      {"seed", significance->seed}};
        }
        if (c.per_example) {
            ordered_json rows = ordered_json::array();
            for (std::size_t i = 0; i < examples.size(); ++i) {
                ordered_json row = {{"qid", examples[i].qid}};
                for (std::size_t r = 0; r < reports.size(); ++r) {
                    const auto& s = reports[r].per_example[i];
                    row["scores"].push_back({{"predicted", s.predicted},
                                             {"em", s.em},
                                             {"f1", s.f1},
                                             {"hallucinated", s.hallucinated}});
                }
                rows.push_back(row);
            }
            report["per_example"] = rows;
        }
        sink.stream() << report.dump(2) << '\n';
    }
    sink.close();
    return kSuccess;
}

void print_tokens(std::ostream& os, const Tokenizer& tok, std::span<const TokenId> ids,
                  std::span<const ByteRange> offsets = {}, std::size_t first_index = 0) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        os << "    " << std::setw(3) << first_index + i << "  " << std::setw(6) << ids[i] << "  \"" << tok.piece(ids[i]) << '"';
        if (i < offsets.size()) os << "  [" << offsets[i].start << ", " << offsets[i].end << ')';
        os << '\n';
    }
}

int cmd_inspect(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.dataset_paths.size() == 1, "inspect takes exactly one --dataset");
    require(!c.qid.empty(), "inspect needs --qid");
    const Tokenizer tok = load_tokenizer(c);
    DatasetReader reader = DatasetReader::open(c.dataset_paths.front(), read_options(c));

    std::optional<ExtractiveExample> found;
    while (auto ex = reader.next()) {
        if (ex->qid == c.qid) {
            found = std::move(ex);
            break;
        }
    }
    if (!found) {
        err << "qid '" << c.qid << "' not found in " << c.dataset_paths.front() << '\n';
        return kDataError;
    }
    const ExtractiveExample& ex = *found;
    const Encoding enc = tok.encode(ex.context);
    const ExampleFix fix = fix_example(tok, ex, enc);

    Sink sink(c.output_path, out);
    std::ostream& os = sink.stream();
    os << "qid:       " << ex.qid << '\n';
    os << "question:  " << ex.question << '\n';
    if (fix.skipped != SkipReason::None) {
        os << "skipped:   " << (fix.skipped == SkipReason::NoAnswer ? "no answer" : "span mismatch") << '\n';
        sink.close();
        return kSuccess;
    }
    os << "answer:    \"" << fix.answer << "\"\n";
    if (fix.gold_span) {
        const ByteRange bytes = codepoint_span_to_byte_span(ex.context, *fix.gold_span);
        os << "gold span: chars [" << fix.gold_span->start << ", " << fix.gold_span->end
           << (fix.gold_span->inclusive_end ? "]" : ")") << " -> bytes [" << bytes.start << ", " << bytes.end << ")\n";
        const AlignmentResult aligned = token_slice_for_span(enc, ex.context, bytes);
        if (aligned.span) {
            const std::size_t from = aligned.span->start >= 2 ? aligned.span->start - 2 : 0;
            const std::size_t to = std::min(enc.size(), aligned.span->end + 2);
            os << "\nin context (tokens " << from << ".." << to << ", covering " << aligned.span->start << ".."
               << aligned.span->end << ", " << to_string(aligned.kind) << "):\n";
            print_tokens(os, tok,
                         std::span(enc.ids).subspan(from, to - from),
                         std::span(enc.offsets).subspan(from, to - from), from);
        }
    }
    const AnswerVariants variants = answer_variants(tok, fix.answer);
    os << "\nstandalone:\n";
    print_tokens(os, tok, variants.raw);
    os << "with prefix space:\n";
    print_tokens(os, tok, variants.prefixed);

    const ConsistencyVerdict verdict = check_consistency(tok, enc, fix.answer);
    os << "\nverdict:   " << to_string(verdict.status) << '\n';
    os << "repair:    " << to_string(fix.outcome.method);
    if (fix.outcome.context_span) {
        os << " (context tokens " << fix.outcome.context_span->start << ".." << fix.outcome.context_span->end << ')';
    }
    if (!fix.outcome.note.empty()) os << " - " << fix.outcome.note;
    os << "\ntarget:\n";
    print_tokens(os, tok, fix.outcome.target_ids);
    os << "decoded:   \"" << tok.decode(fix.outcome.target_ids) << "\"\n";
    sink.close();
    return kSuccess;
}

int cmd_tokenize(const RunConfig& c, std::ostream& out, std::ostream&) {
    const Tokenizer tok = load_tokenizer(c);
    if (!unicode::is_valid_utf8(c.text)) throw Error(ErrorKind::Data, "--text is not valid UTF-8");
    const Encoding enc = tok.encode(c.text);
    ordered_json j;
    j["ids"] = enc.ids;
    j["pieces"] = tok.pieces(enc.ids);
    ordered_json offsets = ordered_json::array();
    for (const auto& r : enc.offsets) offsets.push_back({r.start, r.end});
    j["offsets"] = offsets;
    Sink sink(c.output_path, out);
    sink.stream() << j.dump() << '\n';
    sink.close();
    return kSuccess;
}

}  // namespace

std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
                                    int& exit_code) {
    RunConfig c;
    CLI::App app{"Detects and repairs tokenization inconsistency in extractive QA data."};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string format = "json";
    std::string gzip = "auto";

    const auto add_tokenizer = [&](CLI::App* sub) {
        sub->add_option("--vocab", c.vocab_path, "vocab.json (token -> id)");
        sub->add_option("--merges", c.merges_path, "merges.txt (ranked merge rules)");
    };
    const auto add_dataset = [&](CLI::App* sub) {
        sub->add_option("--dataset", c.dataset_paths, "MRQA .jsonl or .jsonl.gz (repeatable)");
        sub->add_option("--gzip", gzip, "auto|yes|no")->check(CLI::IsMember({"auto", "yes", "no"}));
        sub->add_flag("--exclusive-spans", c.exclusive_spans, "char_spans ends are exclusive");
    };
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--output", c.output_path, "output file (default stdout)");
        sub->add_option("--format", format, "json|tsv")->check(CLI::IsMember({"json", "tsv"}));
        sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", c.seed, "random seed");
    };

    CLI::App* analyze = app.add_subcommand("analyze", "consistency rates per dataset");
    add_tokenizer(analyze);
    add_dataset(analyze);
    add_common(analyze);
    analyze->add_option("--sample", c.sample_size, "uniformly sample N questions");
    analyze->add_option("--answer-policy", c.answer_policy, "first|any")->check(CLI::IsMember({"first", "any"}));
    analyze->add_flag("--per-example", c.per_example, "include per-question verdicts");

    CLI::App* fix = app.add_subcommand("fix", "write a dataset with consistent target token ids");
    add_tokenizer(fix);
    add_dataset(fix);
    add_common(fix);
    fix->add_option("--summary", c.summary_path, "summary report file");

    CLI::App* evaluate = app.add_subcommand("evaluate", "EM/F1, out-of-context rate, paired significance");
    add_dataset(evaluate);
    add_common(evaluate);
    evaluate->add_option("--predictions", c.prediction_paths, "qid -> answer JSON (repeatable, at most 2)");
    evaluate->add_option("--resamples", c.resamples, "sign-flip resamples")->check(CLI::PositiveNumber);
    evaluate->add_flag("--per-example", c.per_example, "include per-question scores");

    CLI::App* inspect = app.add_subcommand("inspect", "trace one example");
    add_tokenizer(inspect);
    add_dataset(inspect);
    add_common(inspect);
    inspect->add_option("--qid", c.qid, "question id")->required();

    CLI::App* tokenize = app.add_subcommand("tokenize", "print ids, pieces and byte offsets of a text");
    add_tokenizer(tokenize);
    tokenize->add_option("--text", c.text, "text to encode")->required();
    tokenize->add_option("--output", c.output_path, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        exit_code = code == 0 ? kSuccess : kUsageError;
        return std::nullopt;
    }
    for (CLI::App* sub : {analyze, fix, evaluate, inspect, tokenize}) {
        if (sub->parsed()) c.subcommand = sub->get_name();
    }
    c.format = format == "tsv" ? OutputFormat::Tsv : OutputFormat::Json;
    if (gzip != "auto") c.gzip = gzip == "yes";
    exit_code = kSuccess;
    return c;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        if (config.workers < 1) throw Error(ErrorKind::Usage, "--workers must be at least 1");
        if (config.subcommand == "analyze") return cmd_analyze(config, out, err);
        if (config.subcommand == "fix") return cmd_fix(config, out, err);
        if (config.subcommand == "evaluate") return cmd_evaluate(config, out, err);
        if (config.subcommand == "inspect") return cmd_inspect(config, out, err);
        if (config.subcommand == "tokenize") return cmd_tokenize(config, out, err);
        throw Error(ErrorKind::Usage, "unknown subcommand '" + config.subcommand + "'");
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::Usage: return kUsageError;
            case ErrorKind::Data: return kDataError;
            case ErrorKind::Io: return kIoError;
        }
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kDataError;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    int code = kSuccess;
    auto config = parse_args(argc, argv, out, err, code);
    if (!config) return code;
    return run(*config, out, err);
}

}  // namespace consistok::cli
