#pragma once

#include "vaelab/corpus.hpp"

#include <string>
#include <vector>

namespace vaelab {

using Vectors = std::vector<std::vector<double>>;

inline constexpr double kActiveUnitThreshold = 0.01;

// Dimensions whose posterior mean varies across inputs by more than delta
// (unbiased sample variance).
std::size_t active_units(const Vectors& posterior_means, double delta = kActiveUnitThreshold);

struct LogDet {
    double value = 0.0;    // -infinity when the covariance is singular
    bool singular = false;
    std::string diagnostic;
};

// log det of the unbiased sample covariance via Cholesky. Requires more
// samples than dimensions.
LogDet log_det_cov(const Vectors& samples);

// KL(N(m, S) || N(0, I)) for the moment-matched Gaussian of the samples.
double moment_match_kl(const Vectors& samples);

// ||mean of samples||^2
double mean_norm_sq(const Vectors& samples);

using TokenSeq = std::vector<TokenId>;

// Corpus-level BLEU with uniform weights over 1..n-gram clipped precisions and
// brevity penalty exp(1 - r/c) when c < r. An order with no matches is floored
// at 1 / (2 * candidate n-gram count); an order with no candidate n-grams at
// all is skipped. Candidates and references are content tokens (no framing).
double bleu_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
              std::size_t n);

// Multi-reference sentence BLEU (clip by max reference count, closest
// reference length). Same smoothing as bleu_n.
double sentence_bleu(const TokenSeq& candidate, const std::vector<const TokenSeq*>& references,
                     std::size_t n);

// Corpus-level n-gram recall: sum of clipped overlaps / sum of reference
// n-grams. Pairs whose reference has no n-gram are skipped.
double rouge_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
               std::size_t n);

// Mean BLEU-4 of each of the first sample_size sentences against all other
// sentences of the corpus as references.
double self_bleu4(const std::vector<TokenSeq>& corpus, std::size_t sample_size = 10000);

std::vector<TokenSeq> content_sequences(const Corpus& corpus);

struct BucketScores {
    std::string bucket;
    std::size_t sentences = 0;
    double bleu2 = 0.0;
    double bleu4 = 0.0;
    double rouge2 = 0.0;
    double rouge4 = 0.0;
};

struct MetricsReport {
    double c_target = 0.0;
    double distortion = 0.0;
    double rate = 0.0;
    double log_det_cov = 0.0;
    double mean_norm_sq = 0.0;
    double moment_match_kl = 0.0;
    std::size_t active_units = 0;
    std::vector<BucketScores> buckets;
    double unk_percent = 0.0;
    double mean_len = 0.0;
    double self_bleu4 = 0.0;
};

// Versioned CSV (comment line, header, one row). BLEU/ROUGE in [0, 1].
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& corpus_name, const MetricsReport& report);

}  // namespace vaelab
