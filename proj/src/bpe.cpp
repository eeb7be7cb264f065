#include "consistok/bpe.hpp"

#include <fstream>
#include <istream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "consistok/error.hpp"
#include "consistok/unicode.hpp"

namespace consistok {

// ---------------------------------------------------------------------------
// ByteMap

ByteMap::ByteMap() {
    unit_to_byte_.fill(-1);
    char32_t next_extra = 256;
    for (int b = 0; b < 256; ++b) {
        const bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
        const char32_t unit = printable ? static_cast<char32_t>(b) : next_extra++;
        byte_to_unit_[b] = unit;
        unit_strings_[b] = unicode::encode_utf8(unit);
        unit_to_byte_[unit] = static_cast<std::int16_t>(b);
    }
}

const ByteMap& ByteMap::instance() {
    static const ByteMap map;
    return map;
}

std::optional<std::uint8_t> ByteMap::byte(char32_t unit) const noexcept {
    if (unit >= unit_to_byte_.size() || unit_to_byte_[unit] < 0) return std::nullopt;
    return static_cast<std::uint8_t>(unit_to_byte_[unit]);
}

std::string ByteMap::to_units(std::string_view bytes) const {
    std::string out;
    out.reserve(bytes.size() * 2);
    for (const char c : bytes) out += unit_strings_[static_cast<std::uint8_t>(c)];
    return out;
}

std::optional<std::string> ByteMap::from_units(std::string_view units) const {
    if (!unicode::is_valid_utf8(units)) return std::nullopt;
    std::string out;
    out.reserve(units.size());
    for (const auto& cp : unicode::decode_utf8(units)) {
        const auto b = byte(cp.value);
        if (!b) return std::nullopt;
        out.push_back(static_cast<char>(*b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loading

Tokenizer Tokenizer::from_parts(Vocab vocab, std::vector<Merge> merges) {
    Tokenizer tok;
    const ByteMap& bytes = ByteMap::instance();

    for (const auto& [piece, id] : vocab) {
        if (id < 0) {
            throw Error(ErrorKind::Data, "negative token id " + std::to_string(id) + " for '" + piece + "'");
        }
        if (!tok.pieces_.emplace(id, Piece{piece, bytes.from_units(piece)}).second) {
            throw Error(ErrorKind::Data, "duplicate token id " + std::to_string(id));
        }
    }
    for (int b = 0; b < 256; ++b) {
        auto it = vocab.find(bytes.unit_string(static_cast<std::uint8_t>(b)));
        if (it == vocab.end()) {
            throw Error(ErrorKind::Data, "vocabulary lacks the single-byte unit for byte " + std::to_string(b));
        }
        tok.byte_ids_[b] = it->second;
    }

    const auto lookup = [&](const std::string& piece, std::size_t rank) {
        auto it = vocab.find(piece);
        if (it == vocab.end()) {
            throw Error(ErrorKind::Data,
                        "merge #" + std::to_string(rank) + " references '" + piece + "', absent from vocabulary");
        }
        return it->second;
    };
    tok.merge_rules_.reserve(merges.size());
    for (std::size_t rank = 0; rank < merges.size(); ++rank) {
        const auto& [left, right] = merges[rank];
        const TokenId result = lookup(left + right, rank);
        const TokenId l = lookup(left, rank);
        const TokenId r = lookup(right, rank);
        // A repeated pair keeps its first (highest-priority) rank.
        tok.merge_rules_.try_emplace(pair_key(l, r), MergeRule{static_cast<std::uint32_t>(rank), result});
    }

    tok.vocab_ = std::move(vocab);
    tok.merges_ = std::move(merges);
    return tok;
}

Tokenizer Tokenizer::load(std::istream& vocab_json, std::istream& merges_txt) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(vocab_json);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Data, std::string("malformed vocabulary JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::Data, "vocabulary JSON must be an object");

    Vocab vocab;
    vocab.reserve(doc.size());
    for (const auto& [piece, value] : doc.items()) {
        if (!value.is_number_integer()) {
            throw Error(ErrorKind::Data, "vocabulary entry '" + piece + "' is not an integer id");
        }
        const auto id = value.get<std::int64_t>();
        if (id < 0 || id > std::numeric_limits<TokenId>::max()) {
            throw Error(ErrorKind::Data, "vocabulary entry '" + piece + "' has out-of-range id");
        }
        vocab.emplace(piece, static_cast<TokenId>(id));
    }

    std::vector<Merge> merges;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(merges_txt, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && !line.empty() && line.front() == '#') continue;
        if (line.empty()) continue;
        const auto space = line.find(' ');
        if (space == std::string::npos || space == 0 || space + 1 == line.size() ||
            line.find(' ', space + 1) != std::string::npos) {
            throw Error(ErrorKind::Data, "merges line " + std::to_string(line_no) + ": expected two units");
        }
        merges.emplace_back(line.substr(0, space), line.substr(space + 1));
    }
    if (merges_txt.bad()) throw Error(ErrorKind::Io, "failed reading merges");

    return from_parts(std::move(vocab), std::move(merges));
}

Tokenizer Tokenizer::load_files(const std::filesystem::path& vocab_path, const std::filesystem::path& merges_path) {
    std::ifstream vocab(vocab_path, std::ios::binary);
    if (!vocab) throw Error(ErrorKind::Io, "cannot open vocabulary file " + vocab_path.string());
    std::ifstream merges(merges_path, std::ios::binary);
    if (!merges) throw Error(ErrorKind::Io, "cannot open merges file " + merges_path.string());
    return load(vocab, merges);
}

// ---------------------------------------------------------------------------
// Pre-tokenization
//
// 's|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+

namespace {

using unicode::Codepoint;

std::size_t match_contraction(const std::vector<Codepoint>& cps, std::size_t i) {
    if (cps[i].value != U'\'' || i + 1 >= cps.size()) return 0;
    const char32_t a = cps[i + 1].value;
    const char32_t b = i + 2 < cps.size() ? cps[i + 2].value : 0;
    if (a == U's' || a == U't') return 2;
    if ((a == U'r' || a == U'v') && b == U'e') return 3;
    if (a == U'm') return 2;
    if (a == U'l' && b == U'l') return 3;
    if (a == U'd') return 2;
    return 0;
}

template <typename Pred>
std::size_t match_prefixed_run(const std::vector<Codepoint>& cps, std::size_t i, Pred pred) {
    std::size_t j = i;
    if (cps[j].value == U' ') ++j;
    const std::size_t run_start = j;
    while (j < cps.size() && pred(cps[j].value)) ++j;
    return j > run_start ? j - i : 0;
}

bool is_other(char32_t cp) {
    return !unicode::is_white_space(cp) && !unicode::is_letter(cp) && !unicode::is_number(cp);
}

std::size_t match_segment(const std::vector<Codepoint>& cps, std::size_t i) {
    if (std::size_t n = match_contraction(cps, i)) return n;
    if (std::size_t n = match_prefixed_run(cps, i, unicode::is_letter)) return n;
    if (std::size_t n = match_prefixed_run(cps, i, unicode::is_number)) return n;
    if (std::size_t n = match_prefixed_run(cps, i, is_other)) return n;

    std::size_t end = i;
    while (end < cps.size() && unicode::is_white_space(cps[end].value)) ++end;
    // \s+(?!\S): the whole run at end of text, otherwise all but the last space.
    if (end == cps.size()) return end - i;
    if (end - i > 1) return end - i - 1;
    // \s+
    return end - i;
}

}  // namespace

std::vector<Segment> Tokenizer::pretokenize(std::string_view text) const {
    const auto cps = unicode::decode_utf8(text);
    std::vector<Segment> out;
    std::size_t i = 0;
    while (i < cps.size()) {
        const std::size_t n = match_segment(cps, i);
        const std::size_t start = cps[i].byte_offset;
        const std::size_t end = i + n < cps.size() ? cps[i + n].byte_offset : text.size();
        out.push_back({text.substr(start, end - start), start});
        i += n;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

struct Symbol {
    TokenId id;
    std::size_t start;
    std::size_t end;
    int prev;
    int next;
};

struct Candidate {
    std::uint32_t rank;
    int left;
    int right;
    TokenId left_id;
    TokenId right_id;

    // Min-heap on (rank, position): lowest rank first, leftmost among equals.
    bool operator>(const Candidate& other) const {
        return rank != other.rank ? rank > other.rank : left > other.left;
    }
};

}  // namespace

void Tokenizer::encode_segment(std::string_view bytes, std::size_t base, Encoding& out) const {
    std::vector<Symbol> symbols;
    symbols.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        symbols.push_back({byte_ids_[static_cast<std::uint8_t>(bytes[i])], base + i, base + i + 1,
                           static_cast<int>(i) - 1,
                           i + 1 < bytes.size() ? static_cast<int>(i) + 1 : -1});
    }

    std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> queue;
    const auto consider = [&](int left, int right) {
        if (left < 0 || right < 0) return;
        auto it = merge_rules_.find(pair_key(symbols[left].id, symbols[right].id));
        if (it != merge_rules_.end()) {
            queue.push({it->second.rank, left, right, symbols[left].id, symbols[right].id});
        }
    };
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) consider(static_cast<int>(i), static_cast<int>(i) + 1);

    while (!queue.empty()) {
        const Candidate top = queue.top();
        queue.pop();
        Symbol& left = symbols[top.left];
        Symbol& right = symbols[top.right];
        // Stale entries: either side already merged away or changed.
        if (left.next != top.right || left.id != top.left_id || right.id != top.right_id ||
            right.end == right.start) {
            continue;
        }
        left.id = merge_rules_.at(pair_key(top.left_id, top.right_id)).result;
        left.end = right.end;
        left.next = right.next;
        if (right.next >= 0) symbols[right.next].prev = top.left;
        right.start = right.end;  // tombstone
        right.prev = right.next = -1;
        consider(left.prev, top.left);
        consider(top.left, left.next);
    }

    for (int i = symbols.empty() ? -1 : 0; i >= 0; i = symbols[i].next) {
        out.ids.push_back(symbols[i].id);
        out.offsets.push_back({symbols[i].start, symbols[i].end});
    }
}

Encoding Tokenizer::encode(std::string_view text) const {
    Encoding enc;
    enc.source_len_bytes = text.size();
    for (const Segment& seg : pretokenize(text)) {
        encode_segment(seg.text, seg.start_byte, enc);
    }
    return enc;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (const TokenId id : ids) {
        auto it = pieces_.find(id);
        if (it == pieces_.end()) throw Error(ErrorKind::Data, "unknown token id " + std::to_string(id));
        if (!it->second.bytes) {
            throw Error(ErrorKind::Data, "token " + std::to_string(id) + " is not made of byte units");
        }
        out += *it->second.bytes;
    }
    return out;
}

const std::string& Tokenizer::piece(TokenId id) const {
    auto it = pieces_.find(id);
    if (it == pieces_.end()) throw Error(ErrorKind::Data, "unknown token id " + std::to_string(id));
    return it->second.units;
}

std::vector<std::string> Tokenizer::pieces(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (const TokenId id : ids) out.push_back(piece(id));
    return out;
}

std::optional<TokenId> Tokenizer::id_of(std::string_view piece) const {
    auto it = vocab_.find(std::string(piece));
    if (it == vocab_.end()) return std::nullopt;
    return it->second;
}

}  // namespace consistok
