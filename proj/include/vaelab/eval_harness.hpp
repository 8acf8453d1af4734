#pragma once

#include "vaelab/decoding.hpp"
#include "vaelab/metrics.hpp"
#include "vaelab/vae.hpp"

#include <functional>
#include <string>
#include <vector>

namespace vaelab {

struct ReconstructionReport {
    std::vector<BucketScores> buckets;  // empty buckets omitted
    std::vector<std::string> notes;
    std::vector<TokenSeq> candidates;   // aligned with the test corpus
};

// Encodes each test sentence, draws one posterior sample (seeded), decodes
// greedily and scores candidates against inputs per length bucket.
ReconstructionReport reconstruction_report(const VaeModel& model, const Corpus& test, std::uint64_t seed,
                                           std::size_t max_len = kDefaultLengthCap);

// n draws from N(0, I) in d dimensions; the list depends only on (n, d, seed).
std::vector<std::vector<double>> prior_samples(std::size_t n, std::size_t dz, std::uint64_t seed);

struct GeneratedCorpus {
    Corpus corpus;  // framed, model vocabulary
    std::vector<std::vector<double>> z;
    std::size_t empty = 0;  // sentences that closed immediately
};

// Decodes n prior draws. Each sentence gets its own sampling stream derived
// from (seed, index), so results do not depend on batching.
GeneratedCorpus generate_corpus(const VaeModel& model, std::size_t n, const DecodePolicy& policy,
                                std::uint64_t seed);

// Re-expresses a corpus in another vocabulary (missing words become <unk>).
Corpus remap(const Corpus& corpus, const Vocab& from, const Vocab& to);

struct LmConfig {
    CellKind arch = CellKind::lstm;
    std::size_t emb_dim = 64;
    std::size_t hidden_dim = 128;
    double lr = 1e-3;
    int epochs = 10;
    std::size_t batch_size = 32;
    double clip_norm = 5.0;

    // Copies the decoder shape and optimizer settings of a VAE config.
    static LmConfig from(const TrainConfig& cfg);
};

// Recurrent LM (a decoder without latent input) trained from scratch.
Decoder train_lm(const LmConfig& cfg, std::size_t vocab_size, const Corpus& corpus, std::uint64_t seed);

// Mean per-sentence total NLL (nats), including the closing </s>.
double mean_sentence_nll(const Decoder& lm, const Corpus& corpus, std::size_t batch_size = 64);

struct FceConfig {
    std::size_t synthetic_size = 5000;
    std::size_t repeats = 3;
    LmConfig lm;
    std::uint64_t seed = 1;
};

struct FceRun {
    std::string policy;
    std::size_t synthetic_size = 0;
    std::size_t repeats = 0;
    std::vector<double> nll;  // one per repeat
    double mean = 0.0;
    double std = 0.0;         // sample standard deviation; 0 for one repeat
    double unk_generated = 0.0;
    double unk_test = 0.0;
    double mean_len = 0.0;
    double self_bleu4 = 0.0;
};

// Supplies the synthetic training corpus of one repeat, already expressed in
// the shared vocabulary.
using CorpusSource = std::function<Corpus(std::size_t repeat, std::uint64_t seed)>;

FceRun fce_from_source(const CorpusSource& source, const Corpus& human_test, const Vocab& shared_vocab,
                       const FceConfig& cfg, const std::string& label = "");

FceRun fce(const VaeModel& model, const DecodePolicy& policy, const Corpus& human_test, const Vocab& shared_vocab,
           const FceConfig& cfg);

// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_and_std(const std::vector<double>& values);

std::string fce_csv_header();
std::string fce_csv_row(const std::string& corpus_name, double c_target, const FceRun& run,
                        std::size_t vocab_size);

// Full diagnostic row on a held-out corpus: D and R, aggregate-posterior
// statistics from one posterior draw per sentence, AU from posterior means,
// bucketed reconstruction scores and corpus statistics of `test`.
MetricsReport evaluate_metrics(const VaeModel& model, const Corpus& test, std::uint64_t seed);

struct HomotopyStudy {
    std::vector<std::vector<std::vector<TokenId>>> paths;
    std::vector<std::size_t> distinct;  // distinct sentences per path
    double mean_distinct = 0.0;
};

// Decodes `steps` points on the segment between pairs of prior draws.
HomotopyStudy homotopy_study(const VaeModel& model, std::size_t pairs, std::size_t steps,
                             const DecodePolicy& policy, std::uint64_t seed);

// Bucketed reconstruction rows, BLEU/ROUGE scaled by 100 for display.
std::string reconstruction_csv(const ReconstructionReport& report);

}  // namespace vaelab
