#pragma once

// Finite worlds with explicit Gaussian encoders, where the aggregate
// posterior q(z) = sum_x p(x) q(z|x) is an exact mixture. Used to check
//     H - D <= I(x; z) <= R
// and R - I = KL(q(z) || p(z)) with Monte-Carlo standard errors.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <span>
#include <string>
#include <vector>

namespace vaelab {

struct GaussianEncoder {
    std::vector<double> mu;
    std::vector<double> var;  // diagonal
};

struct DiscreteWorld {
    std::size_t dz = 1;
    std::vector<double> p;  // empirical input probabilities
    std::vector<GaussianEncoder> encoders;

    std::size_t inputs() const { return p.size(); }
    // Probabilities non-negative and summing to 1 (1e-9), variances > 0,
    // dimensions consistent. Throws std::invalid_argument.
    void validate() const;

    static DiscreteWorld uniform(std::vector<GaussianEncoder> encoders);
    // Every encoder equals the prior N(0, I).
    static DiscreteWorld collapsed(std::size_t inputs, std::size_t dz);
};

struct Estimate {
    double value = 0.0;
    double se = 0.0;  // standard error of the mean
    std::size_t samples = 0;
};

// -sum_x p(x) log p(x)
double entropy(const DiscreteWorld& world);

// sum_x p(x) KL(q(z|x) || N(0, I)), closed form.
double rate(const DiscreteWorld& world);

// log q(z|x) for input x.
double log_encoder_density(const DiscreteWorld& world, std::size_t x, std::span<const double> z);

// E[log q(z|x) - log q(z)] over x ~ p, z ~ q(z|x). Requires samples >= 1000.
Estimate mutual_information_mc(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed);

// log p(x | z) for every input under some decoder.
using LogDecoder = std::function<std::vector<double>(std::span<const double> z)>;

// Bayes decoder p(x|z) proportional to p(x) q(z|x).
LogDecoder bayes_decoder(const DiscreteWorld& world);
// Ignores z and returns log(1/n).
LogDecoder uniform_decoder(const DiscreteWorld& world);

// -E[log p(x|z)] over x ~ p, z ~ q(z|x) for an arbitrary decoder.
Estimate distortion_mc(const DiscreteWorld& world, const LogDecoder& decoder, std::size_t samples,
                       std::uint64_t seed);
Estimate bayes_distortion(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed);

// KL(q(z) || p(z)) estimated from draws of the aggregate posterior.
Estimate aggregate_kl_mc(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed);

struct BoundsReport {
    double entropy = 0.0;
    Estimate distortion;  // Bayes decoder
    Estimate information;
    double rate = 0.0;
    double lower_margin = 0.0;  // I + 3 SE - (H - D)
    double upper_margin = 0.0;  // R + 3 SE - I
    bool holds = false;

    std::string describe() const;
};

inline constexpr std::size_t kDefaultOracleSamples = 100000;

// Estimates D and I from independent streams and checks both inequalities
// with a 3 SE allowance.
BoundsReport bounds_check(const DiscreteWorld& world, std::size_t samples = kDefaultOracleSamples,
                          std::uint64_t seed = 0);

// World file:
//   dz = 2
//   input p=0.5 mu=1,0 var=1,1
//   input p=0.5 mu=-1,0 var=0.5
// '#' starts a comment. p may be omitted on every line (uniform). A single
// var value applies to all dimensions.
DiscreteWorld parse_world(std::istream& is);
DiscreteWorld load_world(const std::filesystem::path& path);
std::string format_world(const DiscreteWorld& world);

}  // namespace vaelab
