#pragma once

// Sequence VAE with an explicit KL capacity target.
//
// Training minimizes, per minibatch,
//     mean_x[-log p(x|z)] + beta * |mean_x KL(q(z|x) || N(0, I)) - C|
// which is the negation of the capacity-constrained objective. The
// max_free_bits variant replaces the penalty with beta * max(C, KL).

#include "vaelab/corpus.hpp"
#include "vaelab/layers.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vaelab {

enum class ObjectiveKind { abs_penalty, max_free_bits };

const char* to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(const std::string& name);

struct TrainConfig {
    double beta = 1.0;
    double c_target = 0.0;  // nats
    ObjectiveKind objective = ObjectiveKind::abs_penalty;
    double lr = 1e-3;
    int epochs = 10;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    CellKind arch = CellKind::lstm;
    std::size_t emb_dim = 64;
    std::size_t hidden_dim = 128;
    std::size_t latent_dim = 16;
    double clip_norm = 5.0;
    std::size_t max_vocab = 20000;

    // 256 / 512 / 64 dimensions and lr 85e-5.
    static TrainConfig paper_scale();
    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct Encoder {
    EmbeddingTable embedding;
    RecurrentCellParams cell;
    Linear mu_head;
    Linear log_var_head;
};

// Autoregressive decoder. Each step reads [embedding(x_t) ++ z]; the hidden
// state starts at zero. latent_dim == 0 gives a plain recurrent LM.
struct Decoder {
    EmbeddingTable embedding;
    RecurrentCellParams cell;
    Linear output;
    std::size_t latent_dim = 0;

    static Decoder create(CellKind kind, std::size_t vocab, std::size_t emb, std::size_t hidden,
                          std::size_t latent, Rng& rng);
    void append_parameters(ParameterList& out, const std::string& prefix) const;
};

struct VaeModel {
    Vocab vocab;
    TrainConfig config;
    Encoder encoder;
    Decoder decoder;

    static VaeModel create(const TrainConfig& cfg, Vocab vocab);
    std::size_t latent_dim() const { return config.latent_dim; }
    ParameterList parameters() const;
};

// mu / log_var are [d_z] for a single sentence or [B, d_z] for a batch.
struct GaussianPosterior {
    Tensor mu;
    Tensor log_var;
};

GaussianPosterior encode(const VaeModel& model, const Sentence& sentence);
GaussianPosterior encode_batch(const VaeModel& model, std::span<const Sentence* const> batch);

// z = mu + exp(log_var / 2) * noise
Tensor reparameterize(const GaussianPosterior& post, const Tensor& noise);

// 0.5 * sum_i (mu_i^2 + sigma_i^2 - 1 - log sigma_i^2); scalar or [B].
Tensor gaussian_kl(const GaussianPosterior& post);

// Teacher-forced total NLL in nats. `sentence` must be framed <s> ... </s>.
Tensor reconstruction_nll(const VaeModel& model, const Sentence& sentence, const Tensor& z);
// z is [B, d_z] (ignored when the decoder has no latent input); returns [B].
Tensor decoder_nll(const Decoder& decoder, std::span<const Sentence* const> batch, const Tensor& z);

// Minimization form of the capacity objective on scalar recon / kl tensors.
Tensor capacity_loss(const Tensor& recon_nll, const Tensor& kl, double beta, double c_target,
                     ObjectiveKind kind);
Tensor capacity_loss(const Tensor& recon_nll, const Tensor& kl, const TrainConfig& cfg);

struct EpochTrace {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_distortion = 0.0;
    double dev_rate = 0.0;
};

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochTrace>& trace);
std::string trace_csv(const std::vector<EpochTrace>& trace);

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    static constexpr int kFormatVersion = 1;
    VaeModel model;
    std::string rng_state;
    int epoch = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochTrace> trace;
};

using EpochCallback = std::function<void(const EpochTrace&)>;

// Shuffled minibatch Adam with global-norm clipping; dev D/R after each epoch.
// Vocab is taken as given (see build_vocab). Throws TrainingDiverged when the
// loss becomes non-finite.
TrainResult train(const TrainConfig& cfg, const Vocab& vocab, const Corpus& train_set,
                  const Corpus& dev_set, const EpochCallback& on_epoch = {});

struct EncodedCorpus {
    std::vector<std::vector<double>> mu;
    std::vector<std::vector<double>> log_var;
    std::vector<std::vector<double>> z;  // one posterior sample per sentence
    std::vector<double> kl;
};

// Deterministic given `seed`. Batched, no gradient recording.
EncodedCorpus encode_corpus(const VaeModel& model, const Corpus& corpus, std::uint64_t seed,
                            std::size_t batch_size = 64);

struct RateDistortion {
    double rate = 0.0;        // nats / sentence
    double distortion = 0.0;  // nats / sentence
};

// R is the mean closed-form KL, D the mean reconstruction NLL under one
// posterior sample per sentence drawn with `seed`.
RateDistortion rate_distortion(const VaeModel& model, const Corpus& corpus,
                               std::uint64_t seed = 0, std::size_t batch_size = 64);

// Per-sentence decoder NLL for fixed codes (rows of `codes`), no recording.
std::vector<double> sentence_nll(const VaeModel& model, const std::vector<const Sentence*>& batch,
                                 const std::vector<std::vector<double>>& codes);

// Checkpoint file: text header terminated by a "payload <bytes>" line, then
// raw little-endian float payload. See README for the grammar.
enum class StorageType { f64, f32 };
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt,
                     StorageType storage = StorageType::f64);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const Checkpoint& ckpt, StorageType storage = StorageType::f64);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

// 64-bit FNV-1a of a file's bytes, hex encoded.
std::string file_hash(const std::filesystem::path& path);

// Splits a corpus into minibatches of framed-sentence pointers.
std::vector<std::vector<const Sentence*>> make_batches(const Corpus& corpus,
                                                       std::span<const std::size_t> order,
                                                       std::size_t batch_size);

}  // namespace vaelab
