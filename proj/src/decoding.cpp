#include "vaelab/decoding.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace vaelab {

DecodePolicy DecodePolicy::greedy() { return {}; }

DecodePolicy DecodePolicy::top_k(std::size_t k) {
    DecodePolicy p;
    p.kind = DecodeKind::top_k;
    p.k = k;
    return p;
}

DecodePolicy DecodePolicy::nucleus(double mass) {
    DecodePolicy p;
    p.kind = DecodeKind::nucleus;
    p.p = mass;
    return p;
}

void DecodePolicy::validate() const {
    if (k < 1) throw std::invalid_argument("decode policy: k must be >= 1");
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("decode policy: p must be in (0, 1]");
    if (max_len < 1) throw std::invalid_argument("decode policy: max_len must be >= 1");
}

std::string DecodePolicy::label() const {
    std::ostringstream os;
    switch (kind) {
        case DecodeKind::greedy: os << "greedy"; break;
        case DecodeKind::top_k: os << "top" << k; break;
        case DecodeKind::nucleus: os << "ns" << p; break;
    }
    return os.str();
}

DecodeKind decode_kind_from_string(const std::string& name) {
    if (name == "greedy") return DecodeKind::greedy;
    if (name == "top_k" || name == "topk") return DecodeKind::top_k;
    if (name == "nucleus" || name == "ns") return DecodeKind::nucleus;
    throw std::invalid_argument("unknown decode policy '" + name + "' (expected greedy, top_k or nucleus)");
}

namespace {

// Ids sorted by descending probability, lower id first among equals.
std::vector<std::size_t> ranked_ids(std::span<const double> probs) {
    std::vector<std::size_t> ids(probs.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    return ids;
}

std::vector<double> keep_and_renormalize(std::span<const double> probs,
                                         std::span<const std::size_t> keep) {
    std::vector<double> out(probs.size(), 0.0);
    double mass = 0.0;
    for (auto id : keep) mass += probs[id];
    for (auto id : keep) out[id] = probs[id] / mass;
    return out;
}

}  // namespace

std::vector<double> top_k_filter(std::span<const double> probs, std::size_t k) {
    if (k == 0) throw std::invalid_argument("top_k_filter: k must be >= 1");
    if (k >= probs.size()) return {probs.begin(), probs.end()};
    auto ids = ranked_ids(probs);
    ids.resize(k);
    return keep_and_renormalize(probs, ids);
}

std::vector<double> nucleus_filter(std::span<const double> probs, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("nucleus_filter: p must be in (0, 1]");
    const auto ids = ranked_ids(probs);
    if (p >= 1.0) return {probs.begin(), probs.end()};
    double total = 0.0;
    for (double q : probs) total += q;
    // Thresholding against p * total keeps the rule exact for inputs whose
    // mass drifts from 1 by rounding.
    const double target = p * total;
    double cum = 0.0;
    std::size_t keep = 0;
    while (keep < ids.size()) {
        cum += probs[ids[keep]];
        ++keep;
        if (cum >= target) break;
    }
    return keep_and_renormalize(probs, std::span(ids).first(keep));
}

TokenId argmax(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("argmax of empty distribution");
    return static_cast<TokenId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

TokenId sample_categorical(std::span<const double> weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::uniform_real_distribution<double> unif(0.0, total);
    const double u = unif(rng);
    double cum = 0.0;
    TokenId last_positive = 0;
    for (TokenId i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        cum += weights[i];
        last_positive = i;
        if (u < cum) return i;
    }
    return last_positive;
}

TokenId choose_token(std::span<const double> probs, const DecodePolicy& policy, Rng& rng) {
    switch (policy.kind) {
        case DecodeKind::greedy:
            return argmax(probs);
        case DecodeKind::top_k:
            return sample_categorical(top_k_filter(probs, policy.k), rng);
        case DecodeKind::nucleus:
            return sample_categorical(nucleus_filter(probs, policy.p), rng);
    }
    throw std::logic_error("unknown decode kind");
}

std::vector<std::vector<TokenId>> generate_batch(const Decoder& decoder,
                                                 const std::vector<std::vector<double>>& codes,
                                                 const DecodePolicy& policy, std::vector<Rng>& rngs) {
    policy.validate();
    NoGradGuard no_grad;
    const std::size_t b = codes.size();
    if (rngs.size() != b) throw std::invalid_argument("generate: one RNG per code required");
    std::vector<std::vector<TokenId>> out(b);
    if (b == 0) return out;

    Tensor latent;
    if (decoder.latent_dim > 0) {
        std::vector<double> flat;
        flat.reserve(b * decoder.latent_dim);
        for (const auto& z : codes) {
            if (z.size() != decoder.latent_dim) {
                throw ShapeError("generate: latent of dimension " + std::to_string(z.size()) +
                                 ", decoder expects " + std::to_string(decoder.latent_dim));
            }
            flat.insert(flat.end(), z.begin(), z.end());
        }
        latent = Tensor::constant({b, decoder.latent_dim}, std::move(flat));
    }

    CellState state = zero_state(decoder.cell, b);
    std::vector<TokenId> current(b, kBosId);
    std::vector<bool> done(b, false);
    const std::size_t vocab = decoder.embedding.vocab_size();
    std::size_t remaining = b;
    // max_len content tokens plus one chance to emit </s>
    for (std::size_t t = 0; t <= policy.max_len && remaining > 0; ++t) {
        Tensor x = embed(decoder.embedding, current);
        if (latent.defined()) x = concat_cols(x, latent);
        state = recurrent_step(decoder.cell, x, state);
        Tensor logits = decoder.output(state.h);
        const auto lv = logits.values();
        for (std::size_t i = 0; i < b; ++i) {
            if (done[i]) continue;
            const auto probs = softmax(lv.subspan(i * vocab, vocab));
            const TokenId next = choose_token(probs, policy, rngs[i]);
            if (next == kEosId || out[i].size() >= policy.max_len) {
                done[i] = true;
                --remaining;
                continue;
            }
            out[i].push_back(next);
            current[i] = next;
        }
    }
    return out;
}

std::vector<TokenId> generate(const VaeModel& model, std::span<const double> z,
                              const DecodePolicy& policy, Rng& rng) {
    std::vector<std::vector<double>> codes{{z.begin(), z.end()}};
    std::vector<Rng> rngs{rng};
    auto out = generate_batch(model.decoder, codes, policy, rngs);
    rng = rngs[0];
    return std::move(out[0]);
}

std::vector<std::vector<double>> interpolate(std::span<const double> z1, std::span<const double> z2,
                                             std::size_t steps) {
    if (steps < 2) throw std::invalid_argument("homotopy: steps must be >= 2");
    if (z1.size() != z2.size()) throw ShapeError("homotopy: endpoints differ in dimension");
    std::vector<std::vector<double>> out;
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
        std::vector<double> z(z1.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = (1.0 - t) * z1[i] + t * z2[i];
        }
        out.push_back(std::move(z));
    }
    return out;
}

std::vector<std::vector<TokenId>> homotopy(const VaeModel& model, std::span<const double> z1,
                                           std::span<const double> z2, std::size_t steps,
                                           const DecodePolicy& policy, Rng& rng) {
    const auto path = interpolate(z1, z2, steps);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < path.size(); ++i) rngs.emplace_back(rng());
    return generate_batch(model.decoder, path, policy, rngs);
}

std::size_t distinct_count(const std::vector<std::vector<TokenId>>& rows) {
    return std::set<std::vector<TokenId>>(rows.begin(), rows.end()).size();
}

}  // namespace vaelab
