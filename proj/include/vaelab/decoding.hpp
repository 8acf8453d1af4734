#pragma once

#include "vaelab/vae.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vaelab {

enum class DecodeKind { greedy, top_k, nucleus };

struct DecodePolicy {
    DecodeKind kind = DecodeKind::greedy;
    std::size_t k = 15;
    double p = 0.9;
    std::size_t max_len = kDefaultLengthCap;
    std::uint64_t seed = 0;

    static DecodePolicy greedy();
    static DecodePolicy top_k(std::size_t k);
    static DecodePolicy nucleus(double p);

    void validate() const;
    // "greedy", "top15", "ns0.9"
    std::string label() const;
};

DecodeKind decode_kind_from_string(const std::string& name);

// Keeps the k most probable ids (lower id wins ties) and renormalizes.
std::vector<double> top_k_filter(std::span<const double> probs, std::size_t k);

// Keeps the smallest descending-probability prefix (lower id first among
// equals) whose cumulative mass reaches p, and renormalizes.
std::vector<double> nucleus_filter(std::span<const double> probs, double p);

// Lowest id among maximal entries.
TokenId argmax(std::span<const double> probs);

// Draws from a (not necessarily normalized) non-negative weight vector.
TokenId sample_categorical(std::span<const double> weights, Rng& rng);

// Applies the policy's filter and picks the next token.
TokenId choose_token(std::span<const double> probs, const DecodePolicy& policy, Rng& rng);

// Autoregressive decode from <s> with [embedding ++ z] inputs. Stops at </s>
// or max_len tokens; the returned ids exclude <s> and the closing </s>.
std::vector<TokenId> generate(const VaeModel& model, std::span<const double> z,
                              const DecodePolicy& policy, Rng& rng);

// Decodes each row of `codes` with its own RNG (one per row), batched.
std::vector<std::vector<TokenId>> generate_batch(const Decoder& decoder,
                                                 const std::vector<std::vector<double>>& codes,
                                                 const DecodePolicy& policy, std::vector<Rng>& rngs);

// z_t = (1 - t) z1 + t z2 for t = 0, 1/(steps-1), ..., 1.
std::vector<std::vector<double>> interpolate(std::span<const double> z1, std::span<const double> z2,
                                             std::size_t steps);

std::vector<std::vector<TokenId>> homotopy(const VaeModel& model, std::span<const double> z1,
                                           std::span<const double> z2, std::size_t steps,
                                           const DecodePolicy& policy, Rng& rng);

// Number of distinct sequences in a list.
std::size_t distinct_count(const std::vector<std::vector<TokenId>>& rows);

}  // namespace vaelab
