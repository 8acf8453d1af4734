#include "vaelab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vaelab {

namespace {

const std::vector<std::string>& reserved_names() {
    static const std::vector<std::string> names = {"<pad>", "<s>", "</s>", "<unk>"};
    return names;
}

}  // namespace

TokenizedLine tokenize(const std::string& line) {
    TokenizedLine out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) {
        std::transform(tok.begin(), tok.end(), tok.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(tok));
    }
    return out;
}

bool is_reserved_token(const std::string& token) {
    const auto& r = reserved_names();
    return std::find(r.begin(), r.end(), token) != r.end();
}

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
    tokens_ = reserved_names();
    tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
    for (TokenId i = 0; i < tokens_.size(); ++i) {
        if (i >= kReservedCount && is_reserved_token(tokens_[i])) {
            throw std::invalid_argument("vocab: reserved token '" + tokens_[i] +
                                        "' listed as a regular token");
        }
        if (!index_.emplace(tokens_[i], i).second) {
            throw std::invalid_argument("vocab: duplicate token '" + tokens_[i] + "'");
        }
    }
}

const std::string& Vocab::token(TokenId id) const {
    if (id >= tokens_.size()) {
        throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    }
    return tokens_[id];
}

TokenId Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnkId : it->second;
}

bool Vocab::contains(const std::string& token) const { return index_.count(token) > 0; }

Sentence Vocab::encode(const TokenizedLine& tokens) const {
    Sentence out;
    out.reserve(tokens.size() + 2);
    out.push_back(kBosId);
    for (const auto& t : tokens) {
        out.push_back(id(t));
    }
    out.push_back(kEosId);
    return out;
}

TokenizedLine Vocab::decode(const Sentence& ids) const {
    TokenizedLine out;
    for (TokenId id : ids) {
        if (id == kBosId || id == kEosId || id == kPadId) {
            continue;
        }
        out.push_back(id < tokens_.size() ? tokens_[id] : tokens_[kUnkId]);
    }
    return out;
}

std::string Vocab::decode_line(const Sentence& ids) const {
    std::string line;
    for (const auto& t : decode(ids)) {
        if (!line.empty()) line += ' ';
        line += t;
    }
    return line;
}

void Vocab::write(std::ostream& os) const {
    for (TokenId i = 0; i < kReservedCount; ++i) {
        os << "# " << i << ' ' << tokens_[i] << '\n';
    }
    for (TokenId i = kReservedCount; i < tokens_.size(); ++i) {
        os << tokens_[i] << '\n';
    }
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write vocab file " + path.string());
    }
    write(os);
}

Vocab Vocab::read(std::istream& is) {
    std::vector<std::string> tokens;
    std::string line;
    std::size_t header = 0;
    while (std::getline(is, line)) {
        if (header < kReservedCount) {
            if (line.empty() || line[0] != '#') {
                throw std::runtime_error("vocab: expected reserved header line, got '" + line + "'");
            }
            ++header;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        tokens.push_back(line);
    }
    if (header < kReservedCount) {
        throw std::runtime_error("vocab: truncated header");
    }
    return Vocab(tokens);
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read vocab file " + path.string());
    }
    return read(is);
}

Vocab build_vocab(const TokenizedText& text, std::size_t max_size) {
    if (max_size <= 4) {
        throw std::invalid_argument("build_vocab: max_size must be > 4");
    }
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    for (const auto& line : text) {
        for (const auto& t : line) {
            ++total;
            if (!is_reserved_token(t)) {
                ++counts[t];
            }
        }
    }
    if (total == 0) {
        throw std::invalid_argument("build_vocab: empty input");
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // map iteration is lexicographic, so a stable sort on count keeps the tie rule
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (ranked.size() > max_size) {
        ranked.resize(max_size);
    }
    std::vector<std::string> tokens;
    tokens.reserve(ranked.size());
    for (auto& [tok, _] : ranked) {
        tokens.push_back(tok);
    }
    return Vocab(tokens);
}

Vocab build_shared_vocab(const std::vector<TokenizedText>& sources) {
    if (sources.size() < 2) {
        throw std::invalid_argument("build_shared_vocab: need at least two sources");
    }
    auto token_set = [](const TokenizedText& text) {
        std::set<std::string> s;
        for (const auto& line : text)
            for (const auto& t : line)
                if (!is_reserved_token(t)) s.insert(t);
        return s;
    };
    std::set<std::string> shared = token_set(sources.front());
    for (std::size_t i = 1; i < sources.size(); ++i) {
        const auto other = token_set(sources[i]);
        std::set<std::string> next;
        std::set_intersection(shared.begin(), shared.end(), other.begin(), other.end(),
                              std::inserter(next, next.end()));
        shared = std::move(next);
    }
    if (shared.empty()) {
        throw std::invalid_argument("build_shared_vocab: sources share no tokens");
    }
    return Vocab(std::vector<std::string>(shared.begin(), shared.end()));
}

const char* to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
        case Split::generated: return "generated";
    }
    return "?";
}

TokenizedText read_text(std::istream& is) {
    TokenizedText out;
    std::string line;
    while (std::getline(is, line)) {
        auto toks = tokenize(line);
        if (!toks.empty()) {
            out.push_back(std::move(toks));
        }
    }
    return out;
}

TokenizedText read_text(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot read corpus file " + path.string());
    }
    return read_text(is);
}

void write_text(const std::filesystem::path& path, const TokenizedText& text) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write corpus file " + path.string());
    }
    for (const auto& line : text) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            os << (i ? " " : "") << line[i];
        }
        os << '\n';
    }
}

Corpus make_corpus(const TokenizedText& text, const Vocab& vocab, Split split, std::string source,
                   std::size_t length_cap, IngestStats* stats) {
    Corpus c;
    c.source = std::move(source);
    c.split = split;
    IngestStats local;
    for (const auto& line : text) {
        if (line.size() > length_cap) {
            ++local.dropped_too_long;
            continue;
        }
        c.sentences.push_back(vocab.encode(line));
        ++local.kept;
    }
    if (stats) {
        *stats = local;
    }
    return c;
}

TokenizedText to_text(const Corpus& corpus, const Vocab& vocab) {
    TokenizedText out;
    out.reserve(corpus.size());
    for (const auto& s : corpus.sentences) {
        out.push_back(vocab.decode(s));
    }
    return out;
}

std::size_t content_length(const Sentence& framed) {
    std::size_t n = 0;
    for (TokenId id : framed) {
        if (id != kBosId && id != kEosId && id != kPadId) ++n;
    }
    return n;
}

std::vector<TokenId> content_tokens(const Sentence& framed) {
    std::vector<TokenId> out;
    for (TokenId id : framed) {
        if (id != kBosId && id != kEosId && id != kPadId) out.push_back(id);
    }
    return out;
}

const std::vector<Bucket>& standard_buckets() {
    static const std::vector<Bucket> buckets = {
        {"Bucket 1", 0, 10},
        {"Bucket 2", 11, 20},
        {"Bucket 3", 21, 30},
        {"All", 0, std::numeric_limits<std::size_t>::max()},
    };
    return buckets;
}

std::vector<std::pair<Bucket, Corpus>> bucketize(const Corpus& corpus) {
    std::vector<std::pair<Bucket, Corpus>> out;
    for (const auto& b : standard_buckets()) {
        Corpus part;
        part.source = corpus.source;
        part.split = corpus.split;
        for (const auto& s : corpus.sentences) {
            if (b.contains(content_length(s))) {
                part.sentences.push_back(s);
            }
        }
        out.emplace_back(b, std::move(part));
    }
    return out;
}

double unk_rate(const Corpus& corpus) {
    std::size_t unk = 0, total = 0;
    for (const auto& s : corpus.sentences) {
        for (TokenId id : s) {
            if (id == kBosId || id == kEosId || id == kPadId) continue;
            ++total;
            if (id == kUnkId) ++unk;
        }
    }
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(unk) / static_cast<double>(total);
}

double mean_length(const Corpus& corpus) {
    if (corpus.empty()) return 0.0;
    double total = 0.0;
    for (const auto& s : corpus.sentences) {
        total += static_cast<double>(content_length(s));
    }
    return total / static_cast<double>(corpus.size());
}

}  // namespace vaelab
