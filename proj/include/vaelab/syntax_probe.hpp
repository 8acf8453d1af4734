#pragma once

// Minimal-pair probing of conditional likelihoods.
//
//   p1: NLL(x+ | z+) < NLL(x- | z+)
//   p2: NLL(x+ | z-) < NLL(x- | z-)
//
// and the same with codes averaged inside each sub-category (p1_bar, p2_bar).
// Exact ties count as misses.

#include "vaelab/vae.hpp"

#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <vector>

namespace vaelab {

struct MinimalPair {
    std::string category;
    std::string sub_category;
    TokenizedLine grammatical;
    TokenizedLine ungrammatical;

    // Throws std::invalid_argument when a field is empty or x+ == x-.
    void validate() const;
};

// One pair per line: category<TAB>sub_category<TAB>x+<TAB>x-.
// Blank lines and lines starting with '#' are skipped.
std::vector<MinimalPair> read_pairs(std::istream& is);
std::vector<MinimalPair> read_pairs(const std::filesystem::path& path);
void write_pairs(std::ostream& os, const std::vector<MinimalPair>& pairs);
void write_pairs(const std::filesystem::path& path, const std::vector<MinimalPair>& pairs);

using Code = std::vector<double>;

// What the probe needs from a model: a code per sentence and the NLL of a
// sentence under a code. Sentences are framed ids.
class LatentScorer {
public:
    virtual ~LatentScorer() = default;
    virtual Code code(const Sentence& sentence) const = 0;
    virtual double nll(const Sentence& sentence, std::span<const double> code) const = 0;
};

class VaeScorer final : public LatentScorer {
public:
    // Posterior means by default. With sample_codes the code is one posterior
    // draw whose noise is seeded from `seed` and the sentence itself.
    explicit VaeScorer(const VaeModel& model, bool sample_codes = false, std::uint64_t seed = 0);

    Code code(const Sentence& sentence) const override;
    double nll(const Sentence& sentence, std::span<const double> code) const override;

private:
    const VaeModel& model_;
    bool sample_codes_;
    std::uint64_t seed_;
};

struct PairHits {
    bool p1 = false;
    bool p2 = false;
};

PairHits pair_scores(const LatentScorer& scorer, const Sentence& grammatical,
                     const Sentence& ungrammatical);

// Same comparison against externally supplied codes.
PairHits pair_scores_with_codes(const LatentScorer& scorer, const Sentence& grammatical,
                                const Sentence& ungrammatical, std::span<const double> z_plus,
                                std::span<const double> z_minus);

struct ProbeRow {
    std::string category;
    std::string sub_category;
    std::size_t pairs = 0;
    std::size_t p1_hits = 0;
    std::size_t p2_hits = 0;
    std::size_t p1_bar_hits = 0;
    std::size_t p2_bar_hits = 0;

    double p1() const;
    double p2() const;
    double p1_bar() const;
    double p2_bar() const;
};

// Groups pairs by (category, sub_category) in order of first appearance.
std::vector<ProbeRow> probe(const LatentScorer& scorer, const Vocab& vocab,
                            const std::vector<MinimalPair>& pairs);

std::string probe_csv(const std::vector<ProbeRow>& rows);

}  // namespace vaelab
