#pragma once

#include "vaelab/layers.hpp"

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace vaelab {

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr std::size_t kReservedCount = 4;
inline constexpr std::size_t kDefaultLengthCap = 50;

using Sentence = std::vector<TokenId>;
using TokenizedLine = std::vector<std::string>;
using TokenizedText = std::vector<TokenizedLine>;

// Lowercased whitespace tokenization.
TokenizedLine tokenize(const std::string& line);

class Vocab {
public:
    Vocab();
    // Reserved entries are prepended; `tokens` must not contain duplicates or
    // reserved names.
    explicit Vocab(const std::vector<std::string>& tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const;
    // kUnkId for unknown tokens.
    TokenId id(const std::string& token) const;
    bool contains(const std::string& token) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    // <s> ids </s>
    Sentence encode(const TokenizedLine& tokens) const;
    // Strips <s>/</s> framing and pads; unknown ids become <unk>.
    TokenizedLine decode(const Sentence& ids) const;
    std::string decode_line(const Sentence& ids) const;

    // Header: four '#' comment lines naming the reserved ids, then one token per
    // line; the i-th token line (0-based) has id i + 4.
    void save(const std::filesystem::path& path) const;
    void write(std::ostream& os) const;
    static Vocab load(const std::filesystem::path& path);
    static Vocab read(std::istream& is);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

bool is_reserved_token(const std::string& token);

// Keeps the max_size most frequent non-reserved tokens (ties broken
// lexicographically). max_size counts non-reserved tokens only and must be > 4.
Vocab build_vocab(const TokenizedText& text, std::size_t max_size);

// Intersection of the token sets of all sources, sorted lexicographically.
Vocab build_shared_vocab(const std::vector<TokenizedText>& sources);

enum class Split { train, dev, test, generated };
const char* to_string(Split split);

struct Corpus {
    std::vector<Sentence> sentences;  // framed with <s> ... </s>
    std::string source;
    Split split = Split::train;

    std::size_t size() const { return sentences.size(); }
    bool empty() const { return sentences.empty(); }
};

// Reads one sentence per line; blank lines are skipped.
TokenizedText read_text(const std::filesystem::path& path);
TokenizedText read_text(std::istream& is);
void write_text(const std::filesystem::path& path, const TokenizedText& text);

struct IngestStats {
    std::size_t kept = 0;
    std::size_t dropped_too_long = 0;
};

// Encodes lines under `vocab`, dropping sentences longer than length_cap tokens.
Corpus make_corpus(const TokenizedText& text, const Vocab& vocab, Split split,
                   std::string source = {}, std::size_t length_cap = kDefaultLengthCap,
                   IngestStats* stats = nullptr);
TokenizedText to_text(const Corpus& corpus, const Vocab& vocab);

// Token count excluding <s>/</s>.
std::size_t content_length(const Sentence& framed);
std::vector<TokenId> content_tokens(const Sentence& framed);

struct Bucket {
    std::string label;
    std::size_t min_len = 0;  // inclusive
    std::size_t max_len = 0;  // inclusive
    bool contains(std::size_t len) const { return len >= min_len && len <= max_len; }
};

// Bucket 1: len <= 10, Bucket 2: 10 < len <= 20, Bucket 3: 20 < len <= 30, All.
const std::vector<Bucket>& standard_buckets();
std::vector<std::pair<Bucket, Corpus>> bucketize(const Corpus& corpus);

// 100 * <unk> count / content-token count (<s>, </s>, <pad> excluded).
double unk_rate(const Corpus& corpus);
double mean_length(const Corpus& corpus);

}  // namespace vaelab
