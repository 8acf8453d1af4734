#include "vaelab/decoding.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace vaelab;

namespace {

std::vector<double> random_distribution(std::size_t n, Rng& rng, bool with_ties) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> p(n);
    for (auto& x : p) x = with_ties ? std::floor(u(rng) * 4) / 4 + 0.01 : u(rng);
    const double s = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= s;
    return p;
}

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

// Ids sorted by descending probability, lower id first among equals.
std::vector<std::size_t> ranking(const std::vector<double>& p) {
    std::vector<std::size_t> ids(p.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    return ids;
}

VaeModel small_model(std::uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.emb_dim = 6;
    cfg.hidden_dim = 10;
    cfg.latent_dim = 4;
    cfg.seed = seed;
    std::vector<std::string> words;
    for (int i = 0; i < 20; ++i) words.push_back("w" + std::to_string(i));
    return VaeModel::create(cfg, Vocab(words));
}

}  // namespace

TEST_CASE("top-k examples") {
    std::vector<double> p = {0.5, 0.3, 0.1, 0.1};
    auto f = top_k_filter(p, 2);
    CHECK(f[0] == doctest::Approx(0.625));
    CHECK(f[1] == doctest::Approx(0.375));
    CHECK(f[2] == 0.0);
    CHECK(f[3] == 0.0);

    auto same = top_k_filter(p, 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == doctest::Approx(p[i]).epsilon(1e-15));
    CHECK(top_k_filter(p, 9) == same);

    auto tie = top_k_filter(std::vector<double>{0.4, 0.3, 0.3}, 2);
    CHECK(tie[0] > 0);
    CHECK(tie[1] > 0);
    CHECK(tie[2] == 0);
    CHECK_THROWS(top_k_filter(p, 0));
}

TEST_CASE("nucleus examples") {
    auto f = nucleus_filter(std::vector<double>{0.5, 0.3, 0.15, 0.05}, 0.9);
    CHECK(f[0] == doctest::Approx(10.0 / 19));
    CHECK(f[1] == doctest::Approx(6.0 / 19));
    CHECK(f[2] == doctest::Approx(3.0 / 19));
    CHECK(f[3] == 0.0);

    std::vector<double> p = {0.1, 0.2, 0.3, 0.4};
    auto full = nucleus_filter(p, 1.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(full[i] == doctest::Approx(p[i]));

    auto head = nucleus_filter(std::vector<double>{0.95, 0.05}, 0.9);
    CHECK(head[0] == 1.0);
    CHECK(head[1] == 0.0);
    CHECK_THROWS(nucleus_filter(p, 0.0));
    CHECK_THROWS(nucleus_filter(p, 1.5));
}

TEST_CASE("filter properties on random distributions") {
    Rng rng(42);
    std::uniform_int_distribution<std::size_t> len(1, 30);
    std::uniform_real_distribution<double> pu(0.01, 1.0);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto p = random_distribution(len(rng), rng, trial % 2 == 0);
        const std::size_t k = 1 + trial % (p.size() + 2);
        const double mass = pu(rng);
        const auto order = ranking(p);

        const auto tk = top_k_filter(p, k);
        CHECK(std::abs(total(tk) - 1.0) < 1e-9);
        const std::size_t kept_k = std::min(k, p.size());
        for (std::size_t r = 0; r < p.size(); ++r) {
            const std::size_t id = order[r];
            if (r < kept_k) {
                CHECK(tk[id] == doctest::Approx(p[id] / std::accumulate(order.begin(), order.begin() + kept_k, 0.0,
                                                                        [&](double a, std::size_t j) { return a + p[j]; })));
            } else {
                CHECK(tk[id] == 0.0);
            }
        }

        const auto ns = nucleus_filter(p, mass);
        CHECK(std::abs(total(ns) - 1.0) < 1e-9);
        std::size_t kept = 0;
        double cum = 0, cum_before_last = 0;
        for (std::size_t r = 0; r < p.size(); ++r) {
            const std::size_t id = order[r];
            if (ns[id] > 0) {
                CHECK(p[id] > 0);
                CHECK(kept == r);  // support is a prefix of the ranking
                cum_before_last = cum;
                cum += p[id];
                ++kept;
            }
        }
        // Reaches the mass, and is minimal up to roundoff.
        CHECK(cum >= mass - 1e-12);
        CHECK(cum_before_last < mass + 1e-12);
    }
}

TEST_CASE("argmax and categorical sampling") {
    CHECK(argmax(std::vector<double>{0.2, 0.4, 0.4}) == 1);
    CHECK_THROWS(argmax(std::vector<double>{}));
    Rng rng(3);
    std::vector<double> w = {1.0, 0.0, 3.0};
    std::vector<int> counts(3);
    for (int i = 0; i < 20000; ++i) ++counts[sample_categorical(w, rng)];
    CHECK(counts[1] == 0);
    CHECK(counts[2] / 20000.0 == doctest::Approx(0.75).epsilon(0.03));
}

TEST_CASE("policy validation and labels") {
    CHECK(DecodePolicy::greedy().label() == "greedy");
    CHECK(DecodePolicy::top_k(15).label() == "top15");
    CHECK(DecodePolicy::nucleus(0.9).label() == "ns0.9");
    DecodePolicy p;
    p.k = 0;
    p.kind = DecodeKind::top_k;
    CHECK_THROWS(p.validate());
    p = DecodePolicy::nucleus(0.0);
    CHECK_THROWS(p.validate());
    p = DecodePolicy::greedy();
    p.max_len = 0;
    CHECK_THROWS(p.validate());
    CHECK(decode_kind_from_string("nucleus") == DecodeKind::nucleus);
    CHECK_THROWS(decode_kind_from_string("beam"));
}

TEST_CASE("greedy generation is deterministic and bounded") {
    auto m = small_model();
    std::vector<double> z = {0.5, -0.2, 1.0, 0.1};
    Rng r1(1), r2(2);
    auto policy = DecodePolicy::greedy();
    policy.max_len = 7;
    auto a = generate(m, z, policy, r1);
    auto b = generate(m, z, policy, r2);
    CHECK(a == b);
    CHECK(a.size() <= 7);
    for (auto id : a) {
        CHECK(id != kEosId);
        CHECK(id != kBosId);
    }
    CHECK_THROWS_AS(generate(m, std::vector<double>{1.0}, policy, r1), ShapeError);
}

TEST_CASE("top-1 sampling equals greedy") {
    auto m = small_model(4);
    Rng zr(5);
    std::normal_distribution<double> n01;
    for (int i = 0; i < 10; ++i) {
        std::vector<double> z(4);
        for (auto& x : z) x = n01(zr);
        Rng a(i), b(i + 100);
        CHECK(generate(m, z, DecodePolicy::top_k(1), a) == generate(m, z, DecodePolicy::greedy(), b));
    }
}

TEST_CASE("nucleus sampling is stochastic across seeds") {
    auto m = small_model(6);
    std::vector<double> z = {0.1, 0.2, 0.3, 0.4};
    std::set<std::vector<TokenId>> seen;
    for (std::uint64_t s = 0; s < 100; ++s) {
        Rng rng(s);
        seen.insert(generate(m, z, DecodePolicy::nucleus(0.9), rng));
    }
    CHECK(seen.size() > 1);
}

TEST_CASE("batched generation matches single decoding") {
    auto m = small_model(7);
    std::vector<std::vector<double>> codes = {{0, 0, 0, 0}, {1, -1, 0.5, 2}, {-0.3, 0.3, 0.9, -2}};
    for (auto policy : {DecodePolicy::greedy(), DecodePolicy::top_k(5), DecodePolicy::nucleus(0.5)}) {
        policy.max_len = 12;
        std::vector<Rng> rngs = {Rng(1), Rng(2), Rng(3)};
        auto batch = generate_batch(m.decoder, codes, policy, rngs);
        for (std::size_t i = 0; i < codes.size(); ++i) {
            Rng one(i + 1);
            CHECK(batch[i] == generate(m, codes[i], policy, one));
        }
    }
}

TEST_CASE("interpolation") {
    std::vector<double> a = {0, 2}, b = {4, -2};
    auto path = interpolate(a, b, 5);
    REQUIRE(path.size() == 5);
    CHECK(path.front() == a);
    CHECK(path.back() == b);
    CHECK(path[1][0] == doctest::Approx(1.0));
    CHECK(path[2][1] == doctest::Approx(0.0));
    CHECK_THROWS(interpolate(a, b, 1));
    CHECK_THROWS(interpolate(a, std::vector<double>{1.0}, 3));
}

TEST_CASE("homotopy endpoints and constant paths") {
    auto m = small_model(8);
    std::vector<double> z1 = {1, 0, -1, 0.5}, z2 = {-0.5, 2, 0, 0};
    auto policy = DecodePolicy::greedy();
    Rng rng(9);
    auto rows = homotopy(m, z1, z2, 7, policy, rng);
    REQUIRE(rows.size() == 7);
    Rng other(10);
    CHECK(rows.front() == generate(m, z1, policy, other));
    CHECK(rows.back() == generate(m, z2, policy, other));

    auto flat = homotopy(m, z1, z1, 7, policy, rng);
    CHECK(distinct_count(flat) == 1);
}

TEST_CASE("distinct count") {
    CHECK(distinct_count({{1, 2}, {1, 2}, {3}}) == 2);
    CHECK(distinct_count({}) == 0);
}
