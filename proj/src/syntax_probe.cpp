#include "vaelab/syntax_probe.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace vaelab {

void MinimalPair::validate() const {
    if (category.empty() || sub_category.empty()) {
        throw std::invalid_argument("minimal pair: empty category or sub_category");
    }
    if (grammatical.empty() || ungrammatical.empty()) {
        throw std::invalid_argument("minimal pair: empty sentence in " + category + "/" + sub_category);
    }
    if (grammatical == ungrammatical) {
        throw std::invalid_argument("minimal pair: identical sentences in " + category + "/" + sub_category);
    }
}

std::vector<MinimalPair> read_pairs(std::istream& is) {
    std::vector<MinimalPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 4) {
            throw std::invalid_argument("pairs line " + std::to_string(lineno) + ": expected 4 tab-separated fields, got " +
                                        std::to_string(fields.size()));
        }
        MinimalPair p{fields[0], fields[1], tokenize(fields[2]), tokenize(fields[3])};
        try {
            p.validate();
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("pairs line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<MinimalPair> read_pairs(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read pairs file " + path.string());
    return read_pairs(is);
}

namespace {

std::string join(const TokenizedLine& line) {
    std::string out;
    for (const auto& t : line) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

double ratio(std::size_t hits, std::size_t n) {
    return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

void write_pairs(std::ostream& os, const std::vector<MinimalPair>& pairs) {
    for (const auto& p : pairs) {
        os << p.category << '\t' << p.sub_category << '\t' << join(p.grammatical) << '\t'
           << join(p.ungrammatical) << '\n';
    }
}

void write_pairs(const std::filesystem::path& path, const std::vector<MinimalPair>& pairs) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write pairs file " + path.string());
    write_pairs(os, pairs);
}

VaeScorer::VaeScorer(const VaeModel& model, bool sample_codes, std::uint64_t seed)
    : model_(model), sample_codes_(sample_codes), seed_(seed) {}

Code VaeScorer::code(const Sentence& sentence) const {
    NoGradGuard no_grad;
    const auto post = encode(model_, sentence);
    const auto mu = post.mu.values();
    Code z(mu.begin(), mu.end());
    if (sample_codes_) {
        // noise depends only on (seed, sentence) so repeated calls agree
        std::uint64_t h = seed_ ^ 0xcbf29ce484222325ULL;
        for (auto t : sentence) {
            h ^= t;
            h *= 0x100000001b3ULL;
        }
        Rng rng(h);
        std::normal_distribution<double> normal(0.0, 1.0);
        const auto lv = post.log_var.values();
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * lv[i]) * normal(rng);
    }
    return z;
}

double VaeScorer::nll(const Sentence& sentence, std::span<const double> code) const {
    return sentence_nll(model_, {&sentence}, {Code(code.begin(), code.end())}).front();
}

PairHits pair_scores_with_codes(const LatentScorer& scorer, const Sentence& grammatical,
                                const Sentence& ungrammatical, std::span<const double> z_plus,
                                std::span<const double> z_minus) {
    PairHits hits;
    hits.p1 = scorer.nll(grammatical, z_plus) < scorer.nll(ungrammatical, z_plus);
    hits.p2 = scorer.nll(grammatical, z_minus) < scorer.nll(ungrammatical, z_minus);
    return hits;
}

PairHits pair_scores(const LatentScorer& scorer, const Sentence& grammatical, const Sentence& ungrammatical) {
    const Code zp = scorer.code(grammatical);
    const Code zm = scorer.code(ungrammatical);
    return pair_scores_with_codes(scorer, grammatical, ungrammatical, zp, zm);
}

double ProbeRow::p1() const { return ratio(p1_hits, pairs); }
double ProbeRow::p2() const { return ratio(p2_hits, pairs); }
double ProbeRow::p1_bar() const { return ratio(p1_bar_hits, pairs); }
double ProbeRow::p2_bar() const { return ratio(p2_bar_hits, pairs); }

std::vector<ProbeRow> probe(const LatentScorer& scorer, const Vocab& vocab,
                            const std::vector<MinimalPair>& pairs) {
    struct Item {
        Sentence good, bad;
        Code zp, zm;
    };
    std::vector<ProbeRow> rows;
    std::vector<std::vector<Item>> groups;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& p : pairs) {
        p.validate();
        auto key = std::make_pair(p.category, p.sub_category);
        auto [it, fresh] = index.emplace(key, rows.size());
        if (fresh) {
            rows.push_back({p.category, p.sub_category});
            groups.emplace_back();
        }
        Item item{vocab.encode(p.grammatical), vocab.encode(p.ungrammatical), {}, {}};
        item.zp = scorer.code(item.good);
        item.zm = scorer.code(item.bad);
        groups[it->second].push_back(std::move(item));
    }

    for (std::size_t g = 0; g < rows.size(); ++g) {
        auto& row = rows[g];
        const auto& items = groups[g];
        const std::size_t d = items.front().zp.size();
        Code zp_bar(d, 0.0), zm_bar(d, 0.0);
        for (const auto& it : items) {
            for (std::size_t i = 0; i < d; ++i) {
                zp_bar[i] += it.zp[i];
                zm_bar[i] += it.zm[i];
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            zp_bar[i] /= static_cast<double>(items.size());
            zm_bar[i] /= static_cast<double>(items.size());
        }
        for (const auto& it : items) {
            ++row.pairs;
            const auto own = pair_scores_with_codes(scorer, it.good, it.bad, it.zp, it.zm);
            const auto avg = pair_scores_with_codes(scorer, it.good, it.bad, zp_bar, zm_bar);
            row.p1_hits += own.p1;
            row.p2_hits += own.p2;
            row.p1_bar_hits += avg.p1;
            row.p2_bar_hits += avg.p2;
        }
    }
    return rows;
}

std::string probe_csv(const std::vector<ProbeRow>& rows) {
    std::ostringstream os;
    os << "# vaelab-probe v1\n";
    os << "category,sub_category,p1,p2,p1_bar,p2_bar,n_pairs\n";
    os << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.category << ',' << r.sub_category << ',' << r.p1() << ',' << r.p2() << ',' << r.p1_bar() << ','
           << r.p2_bar() << ',' << r.pairs << '\n';
    }
    return os.str();
}

}  // namespace vaelab
