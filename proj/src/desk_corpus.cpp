#include "vaelab/desk_corpus.hpp"

#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

namespace vaelab {

namespace {

struct Inflected {
    const char* singular;
    const char* plural;
};

const std::vector<Inflected> kNouns = {
    {"author", "authors"},     {"pilot", "pilots"},       {"teacher", "teachers"}, {"farmer", "farmers"},
    {"doctor", "doctors"},     {"child", "children"},     {"dog", "dogs"},         {"cat", "cats"},
    {"senator", "senators"},   {"singer", "singers"},     {"guard", "guards"},     {"manager", "managers"},
    {"student", "students"},   {"painter", "painters"},   {"baker", "bakers"},     {"king", "kings"},
    {"queen", "queens"},       {"driver", "drivers"},     {"nurse", "nurses"},     {"officer", "officers"},
    {"horse", "horses"},       {"bird", "birds"},         {"friend", "friends"},   {"neighbor", "neighbors"},
    {"customer", "customers"}, {"surgeon", "surgeons"},   {"dancer", "dancers"},   {"minister", "ministers"},
    {"writer", "writers"},     {"lawyer", "lawyers"},     {"mechanic", "mechanics"}, {"poet", "poets"},
    {"sailor", "sailors"},     {"soldier", "soldiers"},   {"judge", "judges"},     {"cook", "cooks"},
    {"clerk", "clerks"},       {"actor", "actors"},       {"player", "players"},   {"boy", "boys"},
};

const std::vector<Inflected> kIntransitive = {
    {"laughs", "laugh"},   {"swims", "swim"},     {"smiles", "smile"},     {"sleeps", "sleep"},
    {"waits", "wait"},     {"arrives", "arrive"}, {"leaves", "leave"},     {"talks", "talk"},
    {"sings", "sing"},     {"dances", "dance"},   {"runs", "run"},         {"works", "work"},
    {"falls", "fall"},     {"cries", "cry"},      {"jumps", "jump"},       {"listens", "listen"},
    {"travels", "travel"}, {"rests", "rest"},     {"wins", "win"},         {"shouts", "shout"},
    {"writes", "write"},   {"reads", "read"},     {"prays", "pray"},       {"returns", "return"},
};

const std::vector<Inflected> kTransitive = {
    {"likes", "like"},       {"sees", "see"},         {"admires", "admire"},   {"knows", "know"},
    {"hates", "hate"},       {"helps", "help"},       {"meets", "meet"},       {"follows", "follow"},
    {"loves", "love"},       {"calls", "call"},       {"watches", "watch"},    {"greets", "greet"},
    {"thanks", "thank"},     {"trusts", "trust"},     {"finds", "find"},       {"visits", "visit"},
    {"blames", "blame"},     {"praises", "praise"},   {"hires", "hire"},       {"ignores", "ignore"},
    {"remembers", "remember"}, {"annoys", "annoy"},   {"avoids", "avoid"},     {"chases", "chase"},
};

const std::vector<const char*> kAdjectives = {
    "old",    "young",  "tall",    "happy",  "quiet",  "famous", "clever", "angry",  "tired",  "brave",
    "kind",   "small",  "strange", "busy",   "lonely", "proud",  "gentle", "loud",   "polite", "rich",
    "poor",   "shy",    "calm",    "bright", "honest", "nervous", "wise",  "lazy",   "friendly", "serious",
};

const std::vector<const char*> kAdverbs = {
    "quickly", "slowly", "often", "rarely", "loudly", "quietly", "today", "again", "happily", "badly",
    "early",   "late",   "well",  "alone",  "sometimes",
};

const std::vector<const char*> kPrepositions = {
    "near", "behind", "beside", "with", "from", "above", "below", "across", "around", "without",
};

const std::vector<const char*> kSingularDet = {"the", "a", "this", "every", "one", "each"};
const std::vector<const char*> kPluralDet = {"the", "some", "these", "those", "many", "two", "all"};

enum class Number { singular, plural };

class Grammar {
public:
    explicit Grammar(Rng& rng) : rng_(rng) {}

    bool coin(double p) { return std::bernoulli_distribution(p)(rng_); }

    Number number() { return coin(0.5) ? Number::singular : Number::plural; }

    // Zipfian index: weight 1 / (rank + 1).
    std::size_t zipf(std::size_t n) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
        return std::discrete_distribution<std::size_t>(w.begin(), w.end())(rng_);
    }

    // Each topic rotates the Zipf ranking of every word list, so one draw per
    // sentence shifts lexical choice throughout it.
    template <typename T>
    const T& pick(const std::vector<T>& items) {
        const std::size_t n = items.size();
        return items[(zipf(n) + topic_ * n / kTopics) % n];
    }

    void new_topic() { topic_ = std::uniform_int_distribution<std::size_t>(0, kTopics - 1)(rng_); }

    static const char* form(const Inflected& w, Number n) { return n == Number::singular ? w.singular : w.plural; }

    void det(TokenizedLine& out, Number n) { out.push_back(pick(n == Number::singular ? kSingularDet : kPluralDet)); }

    void np(TokenizedLine& out, Number n, bool allow_adj = true) {
        det(out, n);
        if (allow_adj && coin(0.3)) out.push_back(pick(kAdjectives));
        out.push_back(form(pick(kNouns), n));
    }

    void pp(TokenizedLine& out) {
        out.push_back(pick(kPrepositions));
        np(out, number());
    }

    void vp(TokenizedLine& out, Number n, int depth = 0) {
        if (coin(0.5)) {
            out.push_back(form(pick(kIntransitive), n));
            if (coin(0.3)) out.push_back(pick(kAdverbs));
        } else {
            out.push_back(form(pick(kTransitive), n));
            np(out, number());
            if (coin(0.2)) pp(out);
        }
        if (depth == 0 && coin(0.1)) {
            out.push_back("and");
            vp(out, n, depth + 1);
        }
    }

    void subject(TokenizedLine& out, Number n) {
        np(out, n);
        const double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
        if (r < 0.2) {
            pp(out);
        } else if (r < 0.35) {
            out.push_back("who");
            vp(out, n, 1);
        }
    }

    void clause(TokenizedLine& out) {
        const Number n = number();
        subject(out, n);
        vp(out, n);
    }

    TokenizedLine sentence() {
        new_topic();
        TokenizedLine out;
        clause(out);
        if (coin(0.1)) {
            out.push_back(coin(0.5) ? "and" : "but");
            clause(out);
        }
        return out;
    }

private:
    static constexpr std::size_t kTopics = 8;
    Rng& rng_;
    std::size_t topic_ = 0;
};

TokenizedLine sample_sentence(Grammar& g, const DeskCorpusOptions& o) {
    while (true) {
        auto s = g.sentence();
        if (s.size() >= o.min_len && s.size() <= o.max_len) return s;
    }
}

std::pair<TokenizedLine, TokenizedLine> agreement_pair(Grammar& g, const std::string& sub) {
    g.new_topic();
    const Number n = g.number();
    const Number wrong = n == Number::singular ? Number::plural : Number::singular;
    TokenizedLine good;
    g.np(good, n, false);
    const Inflected* verb = nullptr;
    if (sub == "Simple") {
        verb = &g.pick(kIntransitive);
    } else if (sub == "Across a prepositional phrase") {
        good.push_back(g.pick(kPrepositions));
        g.np(good, wrong, false);  // attractor with the opposite number
        verb = &g.pick(kIntransitive);
    } else if (sub == "Across a subject relative clause") {
        good.push_back("who");
        good.push_back(Grammar::form(g.pick(kTransitive), n));
        g.np(good, wrong, false);
        verb = &g.pick(kIntransitive);
    } else {  // Short VP coordination
        good.push_back(Grammar::form(g.pick(kIntransitive), n));
        good.push_back("and");
        verb = &g.pick(kIntransitive);
    }
    TokenizedLine bad = good;
    good.push_back(Grammar::form(*verb, n));
    bad.push_back(Grammar::form(*verb, wrong));
    return {good, bad};
}

}  // namespace

std::vector<std::string> desk_lexicon() {
    std::set<std::string> words = {"who", "and", "but"};
    for (const auto* list : {&kNouns, &kIntransitive, &kTransitive}) {
        for (const auto& w : *list) {
            words.insert(w.singular);
            words.insert(w.plural);
        }
    }
    for (const auto* list : {&kAdjectives, &kAdverbs, &kPrepositions, &kSingularDet, &kPluralDet}) {
        words.insert(list->begin(), list->end());
    }
    return {words.begin(), words.end()};
}

DeskCorpus make_desk_corpus(const DeskCorpusOptions& o) {
    if (o.min_len < 1 || o.min_len > o.max_len) throw std::invalid_argument("desk corpus: bad length range");
    DeskCorpus out;
    Rng rng(o.seed);
    Grammar g(rng);
    for (std::size_t i = 0; i < o.train; ++i) out.train.push_back(sample_sentence(g, o));
    for (std::size_t i = 0; i < o.dev; ++i) out.dev.push_back(sample_sentence(g, o));
    for (std::size_t i = 0; i < o.test; ++i) out.test.push_back(sample_sentence(g, o));

    Rng pair_rng(o.seed ^ 0x5bd1e995ULL);
    Grammar pg(pair_rng);
    for (const char* sub : {"Simple", "Across a prepositional phrase", "Across a subject relative clause",
                            "Short VP coordination"}) {
        for (std::size_t i = 0; i < o.pairs_per_group; ++i) {
            auto [good, bad] = agreement_pair(pg, sub);
            out.pairs.push_back({"SUBJECT-VERB AGREEMENT", sub, std::move(good), std::move(bad)});
        }
    }
    return out;
}

void write_desk_corpus(const std::filesystem::path& dir, const DeskCorpus& corpus) {
    std::filesystem::create_directories(dir);
    write_text(dir / "train.txt", corpus.train);
    write_text(dir / "dev.txt", corpus.dev);
    write_text(dir / "test.txt", corpus.test);
    write_pairs(dir / "pairs.tsv", corpus.pairs);
}

}  // namespace vaelab
