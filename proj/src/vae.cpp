#include "vaelab/vae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace vaelab {

const char* to_string(ObjectiveKind kind) {
    return kind == ObjectiveKind::abs_penalty ? "abs_penalty" : "max_free_bits";
}

ObjectiveKind objective_kind_from_string(const std::string& name) {
    if (name == "abs_penalty" || name == "abs") return ObjectiveKind::abs_penalty;
    if (name == "max_free_bits" || name == "max") return ObjectiveKind::max_free_bits;
    throw std::invalid_argument("unknown objective '" + name +
                                "' (expected abs_penalty or max_free_bits)");
}

TrainConfig TrainConfig::paper_scale() {
    TrainConfig cfg;
    cfg.emb_dim = 256;
    cfg.hidden_dim = 512;
    cfg.latent_dim = 64;
    cfg.lr = 85e-5;
    return cfg;
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
    if (!(beta >= 0.0)) fail("beta must be >= 0");
    if (!(c_target >= 0.0)) fail("c_target must be >= 0");
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(lr > 0.0)) fail("lr must be > 0");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (emb_dim == 0 || hidden_dim == 0 || latent_dim == 0) fail("model dimensions must be >= 1");
    if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
    if (max_vocab <= 4) fail("max_vocab must be > 4");
}

Decoder Decoder::create(CellKind kind, std::size_t vocab, std::size_t emb, std::size_t hidden,
                        std::size_t latent, Rng& rng) {
    Decoder d;
    d.embedding = EmbeddingTable::create(vocab, emb, rng);
    d.cell = RecurrentCellParams::create(kind, emb + latent, hidden, rng);
    d.output = Linear::create(hidden, vocab, rng);
    d.latent_dim = latent;
    return d;
}

void Decoder::append_parameters(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + "embedding", embedding.weight});
    out.push_back({prefix + "cell.w_input", cell.w_input});
    out.push_back({prefix + "cell.w_hidden", cell.w_hidden});
    out.push_back({prefix + "cell.bias", cell.bias});
    out.push_back({prefix + "output.weight", output.weight});
    out.push_back({prefix + "output.bias", output.bias});
}

VaeModel VaeModel::create(const TrainConfig& cfg, Vocab vocab) {
    cfg.validate();
    VaeModel m;
    m.config = cfg;
    m.vocab = std::move(vocab);
    Rng rng(cfg.seed);
    const std::size_t v = m.vocab.size();
    m.encoder.embedding = EmbeddingTable::create(v, cfg.emb_dim, rng);
    m.encoder.cell = RecurrentCellParams::create(cfg.arch, cfg.emb_dim, cfg.hidden_dim, rng);
    m.encoder.mu_head = Linear::create(cfg.hidden_dim, cfg.latent_dim, rng);
    m.encoder.log_var_head = Linear::create(cfg.hidden_dim, cfg.latent_dim, rng);
    m.decoder = Decoder::create(cfg.arch, v, cfg.emb_dim, cfg.hidden_dim, cfg.latent_dim, rng);
    return m;
}

ParameterList VaeModel::parameters() const {
    ParameterList out;
    out.push_back({"encoder.embedding", encoder.embedding.weight});
    out.push_back({"encoder.cell.w_input", encoder.cell.w_input});
    out.push_back({"encoder.cell.w_hidden", encoder.cell.w_hidden});
    out.push_back({"encoder.cell.bias", encoder.cell.bias});
    out.push_back({"encoder.mu.weight", encoder.mu_head.weight});
    out.push_back({"encoder.mu.bias", encoder.mu_head.bias});
    out.push_back({"encoder.log_var.weight", encoder.log_var_head.weight});
    out.push_back({"encoder.log_var.bias", encoder.log_var_head.bias});
    decoder.append_parameters(out, "decoder.");
    return out;
}

namespace {

std::size_t max_length(std::span<const Sentence* const> batch) {
    std::size_t n = 0;
    for (const auto* s : batch) n = std::max(n, s->size());
    return n;
}

void check_ids(const Sentence& s, std::size_t vocab) {
    for (TokenId id : s) {
        if (id >= vocab) {
            throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of " +
                                    std::to_string(vocab));
        }
    }
}

Tensor as_batch(const Tensor& t) { return t.rank() == 1 ? reshape(t, {1, t.size()}) : t; }

}  // namespace

GaussianPosterior encode_batch(const VaeModel& model, std::span<const Sentence* const> batch) {
    if (batch.empty()) {
        throw std::invalid_argument("encode: empty batch");
    }
    const std::size_t vocab = model.encoder.embedding.vocab_size();
    for (const auto* s : batch) {
        if (s->empty()) {
            throw std::invalid_argument("encode: empty sentence");
        }
        check_ids(*s, vocab);
    }
    const std::size_t b = batch.size();
    const std::size_t steps = max_length(batch);
    CellState state = zero_state(model.encoder.cell, b);
    std::vector<TokenId> ids(b);
    std::vector<bool> active(b);
    for (std::size_t t = 0; t < steps; ++t) {
        bool all_active = true;
        for (std::size_t i = 0; i < b; ++i) {
            active[i] = t < batch[i]->size();
            ids[i] = active[i] ? (*batch[i])[t] : kPadId;
            all_active = all_active && active[i];
        }
        CellState next = recurrent_step(model.encoder.cell, embed(model.encoder.embedding, ids), state);
        if (!all_active) {
            next.h = select_rows(active, next.h, state.h);
            if (next.c.defined()) next.c = select_rows(active, next.c, state.c);
        }
        state = std::move(next);
    }
    return {model.encoder.mu_head(state.h), model.encoder.log_var_head(state.h)};
}

GaussianPosterior encode(const VaeModel& model, const Sentence& sentence) {
    const Sentence* one[1] = {&sentence};
    GaussianPosterior p = encode_batch(model, one);
    const std::size_t d = model.latent_dim();
    return {reshape(p.mu, {d}), reshape(p.log_var, {d})};
}

Tensor reparameterize(const GaussianPosterior& post, const Tensor& noise) {
    if (noise.shape() != post.mu.shape()) {
        throw ShapeError("reparameterize: noise " + shape_string(noise.shape()) +
                         " does not match posterior " + shape_string(post.mu.shape()));
    }
    return add(post.mu, mul(exp(scale(post.log_var, 0.5)), noise));
}

Tensor gaussian_kl(const GaussianPosterior& post) {
    Tensor terms = sub(add(square(post.mu), exp(post.log_var)), add_scalar(post.log_var, 1.0));
    if (terms.rank() <= 1) {
        return scale(sum(terms), 0.5);
    }
    return scale(row_sum(terms), 0.5);
}

Tensor decoder_nll(const Decoder& decoder, std::span<const Sentence* const> batch, const Tensor& z) {
    const std::size_t b = batch.size();
    const std::size_t vocab = decoder.embedding.vocab_size();
    for (const auto* s : batch) {
        if (s->size() < 2 || s->front() != kBosId || s->back() != kEosId) {
            throw std::invalid_argument("reconstruction_nll: sentence must be framed <s> ... </s>");
        }
        check_ids(*s, vocab);
    }
    Tensor latent;
    if (decoder.latent_dim > 0) {
        latent = as_batch(z);
        if (latent.rows() != b || latent.cols() != decoder.latent_dim) {
            throw ShapeError("reconstruction_nll: latent " + shape_string(z.shape()) +
                             " does not match batch of " + std::to_string(b) + " x " +
                             std::to_string(decoder.latent_dim));
        }
    }
    const std::size_t steps = max_length(batch) - 1;
    CellState state = zero_state(decoder.cell, b);
    std::vector<TokenId> inputs(b), targets(b);
    std::vector<double> weights(b);
    Tensor total;
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < b; ++i) {
            const bool live = t + 1 < batch[i]->size();
            inputs[i] = live ? (*batch[i])[t] : kPadId;
            targets[i] = live ? (*batch[i])[t + 1] : kPadId;
            weights[i] = live ? 1.0 : 0.0;
        }
        Tensor x = embed(decoder.embedding, inputs);
        if (latent.defined()) {
            x = concat_cols(x, latent);
        }
        state = recurrent_step(decoder.cell, x, state);
        Tensor ce = softmax_cross_entropy(decoder.output(state.h), targets, weights);
        total = total.defined() ? add(total, ce) : ce;
    }
    return total;
}

Tensor reconstruction_nll(const VaeModel& model, const Sentence& sentence, const Tensor& z) {
    const Sentence* one[1] = {&sentence};
    return reshape(decoder_nll(model.decoder, one, z), {});
}

Tensor capacity_loss(const Tensor& recon_nll, const Tensor& kl, double beta, double c_target,
                     ObjectiveKind kind) {
    Tensor penalty = kind == ObjectiveKind::abs_penalty ? abs(add_scalar(kl, -c_target))
                                                        : clamp_min(kl, c_target);
    return add(recon_nll, scale(penalty, beta));
}

Tensor capacity_loss(const Tensor& recon_nll, const Tensor& kl, const TrainConfig& cfg) {
    return capacity_loss(recon_nll, kl, cfg.beta, cfg.c_target, cfg.objective);
}

std::vector<std::vector<const Sentence*>> make_batches(const Corpus& corpus,
                                                       std::span<const std::size_t> order,
                                                       std::size_t batch_size) {
    std::vector<std::vector<const Sentence*>> out;
    for (std::size_t i = 0; i < order.size(); i += batch_size) {
        std::vector<const Sentence*> batch;
        for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) {
            batch.push_back(&corpus.sentences[order[j]]);
        }
        out.push_back(std::move(batch));
    }
    return out;
}

namespace {

Tensor standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(rows * cols);
    for (auto& x : v) x = dist(rng);
    return Tensor::constant({rows, cols}, std::move(v));
}

std::vector<std::size_t> identity_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    return order;
}

std::string rng_to_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

}  // namespace

EncodedCorpus encode_corpus(const VaeModel& model, const Corpus& corpus, std::uint64_t seed,
                            std::size_t batch_size) {
    NoGradGuard no_grad;
    Rng rng(seed);
    EncodedCorpus out;
    const std::size_t d = model.latent_dim();
    const auto order = identity_order(corpus.size());
    for (const auto& batch : make_batches(corpus, order, batch_size)) {
        GaussianPosterior post = encode_batch(model, batch);
        Tensor noise = standard_normal(batch.size(), d, rng);
        Tensor z = reparameterize(post, noise);
        Tensor kl = gaussian_kl(post);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            auto row = [&](const Tensor& t) {
                return std::vector<double>(t.values().begin() + i * d, t.values().begin() + (i + 1) * d);
            };
            out.mu.push_back(row(post.mu));
            out.log_var.push_back(row(post.log_var));
            out.z.push_back(row(z));
            out.kl.push_back(kl.values()[i]);
        }
    }
    return out;
}

RateDistortion rate_distortion(const VaeModel& model, const Corpus& corpus, std::uint64_t seed,
                               std::size_t batch_size) {
    if (corpus.empty()) {
        return {};
    }
    const EncodedCorpus enc = encode_corpus(model, corpus, seed, batch_size);
    RateDistortion rd;
    for (double k : enc.kl) rd.rate += k;
    rd.rate /= static_cast<double>(corpus.size());

    const auto order = identity_order(corpus.size());
    std::size_t offset = 0;
    for (const auto& batch : make_batches(corpus, order, batch_size)) {
        std::vector<std::vector<double>> codes(enc.z.begin() + offset,
                                               enc.z.begin() + offset + batch.size());
        for (double nll : sentence_nll(model, batch, codes)) rd.distortion += nll;
        offset += batch.size();
    }
    rd.distortion /= static_cast<double>(corpus.size());
    return rd;
}

std::vector<double> sentence_nll(const VaeModel& model, const std::vector<const Sentence*>& batch,
                                 const std::vector<std::vector<double>>& codes) {
    NoGradGuard no_grad;
    const std::size_t d = model.latent_dim();
    if (codes.size() != batch.size()) {
        throw ShapeError("sentence_nll: code count does not match batch");
    }
    std::vector<double> flat;
    flat.reserve(batch.size() * d);
    for (const auto& c : codes) {
        if (c.size() != d) throw ShapeError("sentence_nll: code of wrong dimension");
        flat.insert(flat.end(), c.begin(), c.end());
    }
    Tensor z = Tensor::constant({batch.size(), d}, std::move(flat));
    Tensor nll = decoder_nll(model.decoder, batch, z);
    return {nll.values().begin(), nll.values().end()};
}

TrainResult train(const TrainConfig& cfg, const Vocab& vocab, const Corpus& train_set,
                  const Corpus& dev_set, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train_set.empty() || dev_set.empty()) {
        throw std::invalid_argument("train: training and dev corpora must be non-empty");
    }
    TrainResult result;
    result.checkpoint.model = VaeModel::create(cfg, vocab);
    VaeModel& model = result.checkpoint.model;
    // Initialization consumes its own stream; this one drives shuffling and noise.
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<Tensor> params = tensors_of(model.parameters());
    AdamState adam(cfg.lr);
    auto order = identity_order(train_set.size());
    const std::size_t d = cfg.latent_dim;

    double last_finite = 0.0;
    std::size_t step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (const auto& batch : make_batches(train_set, order, cfg.batch_size)) {
            ++step;
            GaussianPosterior post = encode_batch(model, batch);
            Tensor z = reparameterize(post, standard_normal(batch.size(), d, rng));
            Tensor recon = mean(decoder_nll(model.decoder, batch, z));
            Tensor kl = mean(gaussian_kl(post));
            Tensor loss = capacity_loss(recon, kl, cfg);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                std::ostringstream msg;
                msg << "training diverged at epoch " << epoch << " step " << step
                    << "; last finite loss " << last_finite;
                throw TrainingDiverged(msg.str());
            }
            last_finite = value;
            for (auto& p : params) p.zero_grad();
            backward(loss);
            clip_grad_norm(params, cfg.clip_norm);
            adam_update(adam, params);
            loss_sum += value * static_cast<double>(batch.size());
            loss_count += batch.size();
        }
        const RateDistortion rd = rate_distortion(model, dev_set, cfg.seed + 1000003ULL * epoch);
        EpochTrace row{epoch, loss_sum / static_cast<double>(loss_count), rd.distortion, rd.rate};
        result.trace.push_back(row);
        if (on_epoch) on_epoch(row);
    }
    result.checkpoint.epoch = cfg.epochs;
    result.checkpoint.rng_state = rng_to_string(rng);
    return result;
}

std::string trace_csv(const std::vector<EpochTrace>& trace) {
    std::ostringstream os;
    os << "# vaelab-trace v1\n";
    os << "epoch,train_loss,dev_D,dev_R\n";
    os << std::setprecision(17);
    for (const auto& t : trace) {
        os << t.epoch << ',' << t.train_loss << ',' << t.dev_distortion << ',' << t.dev_rate << '\n';
    }
    return os.str();
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<EpochTrace>& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write trace file " + path.string());
    os << trace_csv(trace);
}

}  // namespace vaelab
