#include "vaelab/syntax_probe.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

using namespace vaelab;

namespace {

// Prefers any sentence from a fixed grammatical set, whatever the code.
class RiggedScorer final : public LatentScorer {
public:
    explicit RiggedScorer(std::vector<Sentence> good) : good_(std::move(good)) {}
    Code code(const Sentence& s) const override { return {static_cast<double>(s.size()), 1.0}; }
    double nll(const Sentence& s, std::span<const double>) const override {
        return std::find(good_.begin(), good_.end(), s) != good_.end() ? 0.0 : 1.0;
    }

private:
    std::vector<Sentence> good_;
};

// Knows exactly two sentences; the code names one of them and the decoder
// reproduces it with certainty.
class MemorizingScorer final : public LatentScorer {
public:
    MemorizingScorer(Sentence a, Sentence b) : world_{std::move(a), std::move(b)} {}
    Code code(const Sentence& s) const override { return {s == world_[0] ? 0.0 : 1.0}; }
    double nll(const Sentence& s, std::span<const double> z) const override {
        const auto& target = world_[z[0] < 0.5 ? 0 : 1];
        return s == target ? 0.0 : 40.0;
    }

private:
    Sentence world_[2];
};

class ConstantScorer final : public LatentScorer {
public:
    Code code(const Sentence&) const override { return {0.0}; }
    double nll(const Sentence&, std::span<const double>) const override { return 3.0; }
};

// Scores by a code-dependent per-token cost so averaged codes can change the
// verdict.
class LinearScorer final : public LatentScorer {
public:
    Code code(const Sentence& s) const override {
        double a = 0;
        for (auto t : s) a += static_cast<double>(t % 3) - 1.0;
        return {a, static_cast<double>(s.size())};
    }
    double nll(const Sentence& s, std::span<const double> z) const override {
        double v = 0;
        for (std::size_t i = 0; i < s.size(); ++i) v += (static_cast<double>(s[i]) - 6.0) * z[0] * 0.1 + z[1] * 0.01 * i;
        return v;
    }
};

const Vocab kVocab({"the", "dog", "dogs", "runs", "run", "a", "cat", "cats", "sleeps", "sleep"});

MinimalPair pair(std::string cat, std::string sub, std::string good, std::string bad) {
    return {std::move(cat), std::move(sub), tokenize(good), tokenize(bad)};
}

}  // namespace

TEST_CASE("rigged scorer gets every pair") {
    std::vector<MinimalPair> pairs = {pair("agreement", "simple", "the dog runs", "the dog run"),
                                      pair("agreement", "simple", "the dogs run", "the dogs runs"),
                                      pair("agreement", "across", "a cat sleeps", "a cat sleep")};
    std::vector<Sentence> good;
    for (const auto& p : pairs) good.push_back(kVocab.encode(p.grammatical));
    const RiggedScorer scorer(good);
    const auto rows = probe(scorer, kVocab, pairs);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.p1() == 1.0);
        CHECK(r.p2() == 1.0);
        CHECK(r.p1_bar() == 1.0);
        CHECK(r.p2_bar() == 1.0);
    }
    CHECK(rows[0].pairs == 2);
    CHECK(rows[1].pairs == 1);
}

TEST_CASE("memorizing decoder on a two-sentence world") {
    const auto p = pair("agreement", "simple", "the cat sleeps", "the cat sleep");
    const MemorizingScorer scorer(kVocab.encode(p.grammatical), kVocab.encode(p.ungrammatical));
    const auto rows = probe(scorer, kVocab, {p});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].p1() == 1.0);
    CHECK(rows[0].p2() == 0.0);

    const auto hits = pair_scores(scorer, kVocab.encode(p.grammatical), kVocab.encode(p.ungrammatical));
    CHECK(hits.p1);
    CHECK_FALSE(hits.p2);
}

TEST_CASE("single-pair groups average to their own codes") {
    const LinearScorer scorer;
    std::vector<MinimalPair> pairs = {pair("a", "one", "the dog runs", "the dog run"),
                                      pair("a", "two", "dogs run", "dogs runs"),
                                      pair("b", "one", "a cat sleeps", "the cats sleeps")};
    for (const auto& r : probe(scorer, kVocab, pairs)) {
        CHECK(r.pairs == 1);
        CHECK(r.p1_bar() == r.p1());
        CHECK(r.p2_bar() == r.p2());
    }
}

TEST_CASE("ties count as misses") {
    const ConstantScorer scorer;
    const auto rows = probe(scorer, kVocab, {pair("a", "b", "the dog runs", "the dog run")});
    CHECK(rows[0].p1() == 0.0);
    CHECK(rows[0].p2() == 0.0);
}

TEST_CASE("probe agrees with a direct recount and ignores pair order") {
    const LinearScorer scorer;
    const char* goods[] = {"the dog runs", "the dogs run", "a cat sleeps", "cats sleep", "the cat runs", "dogs run"};
    const char* bads[] = {"the dog run", "the dogs runs", "a cat sleep", "cats sleeps", "the cat run", "dogs runs"};
    std::vector<MinimalPair> pairs;
    for (int i = 0; i < 6; ++i) pairs.push_back(pair("agr", i % 2 ? "odd" : "even", goods[i], bads[i]));

    // recount by hand with explicit group means
    std::map<std::string, std::array<int, 5>> expect;
    std::map<std::string, std::vector<const MinimalPair*>> groups;
    for (const auto& p : pairs) groups[p.sub_category].push_back(&p);
    for (const auto& [name, members] : groups) {
        Code zp_bar(2, 0.0), zm_bar(2, 0.0);
        for (auto* p : members) {
            const auto zp = scorer.code(kVocab.encode(p->grammatical));
            const auto zm = scorer.code(kVocab.encode(p->ungrammatical));
            for (int i = 0; i < 2; ++i) {
                zp_bar[i] += zp[i] / static_cast<double>(members.size());
                zm_bar[i] += zm[i] / static_cast<double>(members.size());
            }
        }
        auto& e = expect[name];
        e = {0, 0, 0, 0, static_cast<int>(members.size())};
        for (auto* p : members) {
            const auto g = kVocab.encode(p->grammatical);
            const auto b = kVocab.encode(p->ungrammatical);
            const auto zp = scorer.code(g);
            const auto zm = scorer.code(b);
            e[0] += scorer.nll(g, zp) < scorer.nll(b, zp);
            e[1] += scorer.nll(g, zm) < scorer.nll(b, zm);
            e[2] += scorer.nll(g, zp_bar) < scorer.nll(b, zp_bar);
            e[3] += scorer.nll(g, zm_bar) < scorer.nll(b, zm_bar);
        }
    }

    const auto rows = probe(scorer, kVocab, pairs);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].sub_category == "even");
    for (const auto& r : rows) {
        const auto& e = expect[r.sub_category];
        CHECK(r.p1_hits == static_cast<std::size_t>(e[0]));
        CHECK(r.p2_hits == static_cast<std::size_t>(e[1]));
        CHECK(r.p1_bar_hits == static_cast<std::size_t>(e[2]));
        CHECK(r.p2_bar_hits == static_cast<std::size_t>(e[3]));
        CHECK(r.pairs == static_cast<std::size_t>(e[4]));
    }

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        auto shuffled = pairs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto again = probe(scorer, kVocab, shuffled);
        std::sort(again.begin(), again.end(), [](auto& a, auto& b) { return a.sub_category < b.sub_category; });
        auto base = rows;
        std::sort(base.begin(), base.end(), [](auto& a, auto& b) { return a.sub_category < b.sub_category; });
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(again[i].p1_hits == base[i].p1_hits);
            CHECK(again[i].p2_hits == base[i].p2_hits);
            CHECK(again[i].p1_bar_hits == base[i].p1_bar_hits);
            CHECK(again[i].p2_bar_hits == base[i].p2_bar_hits);
        }
    }
}

TEST_CASE("pair files") {
    std::istringstream is("# header\n\nagreement\tsimple\tthe dog runs\tthe dog run\r\n"
                          "agreement\tacross\tthe cats sleep\tthe cats sleeps\n");
    const auto pairs = read_pairs(is);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].ungrammatical == TokenizedLine{"the", "dog", "run"});
    CHECK(pairs[1].sub_category == "across");

    std::ostringstream os;
    write_pairs(os, pairs);
    std::istringstream back(os.str());
    const auto again = read_pairs(back);
    REQUIRE(again.size() == 2);
    CHECK(again[1].grammatical == pairs[1].grammatical);

    std::istringstream three("a\tb\tthe dog runs\n");
    CHECK_THROWS_WITH_AS(read_pairs(three), doctest::Contains("line 1"), std::invalid_argument);
    std::istringstream same("a\tb\tthe dog\tthe dog\n");
    CHECK_THROWS_WITH_AS(read_pairs(same), doctest::Contains("identical"), std::invalid_argument);
    std::istringstream blank("a\t\tthe dog\tdogs\n");
    CHECK_THROWS_AS(read_pairs(blank), std::invalid_argument);
    CHECK_THROWS_AS(read_pairs(std::filesystem::path("/nonexistent/pairs.tsv")), std::runtime_error);
}

TEST_CASE("probe CSV") {
    ProbeRow r{"agreement", "simple", 4, 3, 1, 4, 0};
    const auto csv = probe_csv({r});
    CHECK(csv == "# vaelab-probe v1\ncategory,sub_category,p1,p2,p1_bar,p2_bar,n_pairs\n"
                 "agreement,simple,0.75,0.25,1,0,4\n");
}

TEST_CASE("VAE scorer codes and likelihoods") {
    TrainConfig cfg;
    cfg.emb_dim = 6;
    cfg.hidden_dim = 8;
    cfg.latent_dim = 3;
    cfg.seed = 2;
    const auto model = VaeModel::create(cfg, kVocab);
    const auto s = kVocab.encode(tokenize("the dog runs"));
    const auto t = kVocab.encode(tokenize("the cat runs"));

    const VaeScorer means(model);
    const auto post = encode(model, s);
    const auto code = means.code(s);
    REQUIRE(code.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(code[i] == post.mu.values()[i]);

    const VaeScorer sampled(model, true, 7);
    CHECK(sampled.code(s) == sampled.code(s));
    CHECK(sampled.code(s) != sampled.code(t));
    CHECK(sampled.code(s) != code);
    CHECK(VaeScorer(model, true, 8).code(s) != sampled.code(s));

    const double direct = sentence_nll(model, {&s}, {code}).front();
    CHECK(means.nll(s, code) == direct);
    CHECK(direct > 0.0);
}
