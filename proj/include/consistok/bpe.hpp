#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace consistok {

using TokenId = std::int32_t;

/// Half-open byte range [start, end) into a UTF-8 string.
struct ByteRange {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - start; }
    bool empty() const noexcept { return start == end; }
    friend bool operator==(const ByteRange&, const ByteRange&) = default;
};

/// Token ids of a text together with the source bytes each one covers.
/// Offsets are sorted, disjoint and tile [0, source_len_bytes) exactly.
struct Encoding {
    std::vector<TokenId> ids;
    std::vector<ByteRange> offsets;
    std::size_t source_len_bytes = 0;

    std::size_t size() const noexcept { return ids.size(); }
    bool empty() const noexcept { return ids.empty(); }
};

/// A pre-tokenization segment. `text` views into the string passed to pretokenize().
struct Segment {
    std::string_view text;
    std::size_t start_byte;
};

/// The GPT-2 printable-byte alphabet: bytes 33-126, 161-172 and 174-255 map to
/// themselves, the rest map in ascending order to U+0100, U+0101, ...
class ByteMap {
public:
    static const ByteMap& instance();

    char32_t unit(std::uint8_t byte) const noexcept { return byte_to_unit_[byte]; }
    const std::string& unit_string(std::uint8_t byte) const noexcept { return unit_strings_[byte]; }
    /// Inverse lookup; nullopt when `unit` is not the image of any byte.
    std::optional<std::uint8_t> byte(char32_t unit) const noexcept;

    /// Maps raw bytes to their unit string (UTF-8 of the unit codepoints).
    std::string to_units(std::string_view bytes) const;
    /// Inverse of to_units(); nullopt when `units` contains a non-byte codepoint.
    std::optional<std::string> from_units(std::string_view units) const;

private:
    ByteMap();

    std::array<char32_t, 256> byte_to_unit_{};
    std::array<std::string, 256> unit_strings_{};
    std::array<std::int16_t, 512> unit_to_byte_{};
};

/// Immutable byte-level BPE model. Safe to share across threads once built.
class Tokenizer {
public:
    using Vocab = std::unordered_map<std::string, TokenId>;
    using Merge = std::pair<std::string, std::string>;

    /// Builds a tokenizer from an in-memory vocabulary and ranked merge list
    /// (index 0 merges first). Throws Error(Data) when the vocabulary lacks a
    /// single-byte unit, has duplicate or negative ids, or a merge produces a
    /// string outside the vocabulary.
    static Tokenizer from_parts(Vocab vocab, std::vector<Merge> merges);

    /// Parses a `vocab.json` object and a `merges.txt` listing.
    static Tokenizer load(std::istream& vocab_json, std::istream& merges_txt);
    static Tokenizer load_files(const std::filesystem::path& vocab_path,
                                const std::filesystem::path& merges_path);

    /// Splits text with the GPT-2 segmentation pattern. Throws
    /// std::invalid_argument on malformed UTF-8.
    std::vector<Segment> pretokenize(std::string_view text) const;

    Encoding encode(std::string_view text) const;

    /// Concatenates the pieces of `ids` and maps units back to bytes.
    /// Throws Error(Data) on an unknown id.
    std::string decode(std::span<const TokenId> ids) const;

    /// The unit-alphabet string of a token ("Ġ1912"). Throws Error(Data) on unknown id.
    const std::string& piece(TokenId id) const;
    std::vector<std::string> pieces(std::span<const TokenId> ids) const;
    std::optional<TokenId> id_of(std::string_view piece) const;
    /// Token id of the single-byte unit for `byte`.
    TokenId byte_id(std::uint8_t byte) const noexcept { return byte_ids_[byte]; }

    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    std::size_t merge_count() const noexcept { return merges_.size(); }
    const std::vector<Merge>& merges() const noexcept { return merges_; }

private:
    struct MergeRule {
        std::uint32_t rank;
        TokenId result;
    };

    Tokenizer() = default;

    static std::uint64_t pair_key(TokenId left, TokenId right) noexcept {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
               static_cast<std::uint32_t>(right);
    }

    void encode_segment(std::string_view bytes, std::size_t base, Encoding& out) const;

    struct Piece {
        std::string units;
        std::optional<std::string> bytes;  // nullopt for pieces outside the byte alphabet
    };

    Vocab vocab_;
    std::unordered_map<TokenId, Piece> pieces_;
    std::vector<Merge> merges_;
    std::unordered_map<std::uint64_t, MergeRule> merge_rules_;
    std::array<TokenId, 256> byte_ids_{};
};

}  // namespace consistok
