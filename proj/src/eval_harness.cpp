#include "vaelab/eval_harness.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vaelab {

namespace {

constexpr std::size_t kDecodeBatch = 64;

std::vector<std::size_t> iota_order(std::size_t n) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    return order;
}

// splitmix64 finalizer, used to derive per-sentence streams
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Sentence frame(const TokenSeq& content) {
    Sentence s;
    s.reserve(content.size() + 2);
    s.push_back(kBosId);
    s.insert(s.end(), content.begin(), content.end());
    s.push_back(kEosId);
    return s;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

ReconstructionReport reconstruction_report(const VaeModel& model, const Corpus& test, std::uint64_t seed,
                                           std::size_t max_len) {
    ReconstructionReport report;
    if (test.empty()) {
        report.notes.push_back("empty test corpus");
        return report;
    }
    const EncodedCorpus enc = encode_corpus(model, test, seed);
    DecodePolicy greedy = DecodePolicy::greedy();
    greedy.max_len = max_len;
    for (std::size_t begin = 0; begin < test.size(); begin += kDecodeBatch) {
        const std::size_t end = std::min(test.size(), begin + kDecodeBatch);
        std::vector<std::vector<double>> codes(enc.z.begin() + begin, enc.z.begin() + end);
        std::vector<Rng> rngs(codes.size());  // unused by greedy decoding
        for (auto& c : generate_batch(model.decoder, codes, greedy, rngs)) report.candidates.push_back(std::move(c));
    }

    const auto refs = content_sequences(test);
    for (const auto& bucket : standard_buckets()) {
        std::vector<TokenSeq> cand, ref;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            if (bucket.contains(refs[i].size())) {
                cand.push_back(report.candidates[i]);
                ref.push_back(refs[i]);
            }
        }
        if (cand.empty()) {
            report.notes.push_back(bucket.label + ": no test sentences, row omitted");
            continue;
        }
        BucketScores s;
        s.bucket = bucket.label;
        s.sentences = cand.size();
        s.bleu2 = bleu_n(cand, ref, 2);
        s.bleu4 = bleu_n(cand, ref, 4);
        const auto rouge_or_nan = [&](std::size_t n) {
            const bool any = std::any_of(ref.begin(), ref.end(), [n](const TokenSeq& r) { return r.size() >= n; });
            if (!any) {
                report.notes.push_back(bucket.label + ": every reference is shorter than " + std::to_string(n) +
                                       " tokens, ROUGE-" + std::to_string(n) + " undefined");
                return std::nan("");
            }
            return rouge_n(cand, ref, n);
        };
        s.rouge2 = rouge_or_nan(2);
        s.rouge4 = rouge_or_nan(4);
        report.buckets.push_back(s);
    }
    return report;
}

std::vector<std::vector<double>> prior_samples(std::size_t n, std::size_t dz, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> out(n, std::vector<double>(dz));
    for (auto& z : out)
        for (auto& v : z) v = normal(rng);
    return out;
}

GeneratedCorpus generate_corpus(const VaeModel& model, std::size_t n, const DecodePolicy& policy,
                                std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
    policy.validate();
    GeneratedCorpus out;
    out.z = prior_samples(n, model.latent_dim(), seed);
    out.corpus.split = Split::generated;
    out.corpus.source = "generated";
    for (std::size_t begin = 0; begin < n; begin += kDecodeBatch) {
        const std::size_t end = std::min(n, begin + kDecodeBatch);
        std::vector<std::vector<double>> codes(out.z.begin() + begin, out.z.begin() + end);
        std::vector<Rng> rngs;
        for (std::size_t i = begin; i < end; ++i) rngs.emplace_back(mix(seed ^ mix(i)));
        for (const auto& tokens : generate_batch(model.decoder, codes, policy, rngs)) {
            if (tokens.empty()) ++out.empty;
            out.corpus.sentences.push_back(frame(tokens));
        }
    }
    return out;
}

Corpus remap(const Corpus& corpus, const Vocab& from, const Vocab& to) {
    Corpus out;
    out.source = corpus.source;
    out.split = corpus.split;
    out.sentences.reserve(corpus.size());
    for (const auto& s : corpus.sentences) {
        Sentence r;
        r.reserve(s.size());
        for (auto id : s) r.push_back(id < kReservedCount ? id : to.id(from.token(id)));
        out.sentences.push_back(std::move(r));
    }
    return out;
}

LmConfig LmConfig::from(const TrainConfig& cfg) {
    LmConfig lm;
    lm.arch = cfg.arch;
    lm.emb_dim = cfg.emb_dim;
    lm.hidden_dim = cfg.hidden_dim;
    lm.lr = cfg.lr;
    lm.epochs = cfg.epochs;
    lm.batch_size = cfg.batch_size;
    lm.clip_norm = cfg.clip_norm;
    return lm;
}

Decoder train_lm(const LmConfig& cfg, std::size_t vocab_size, const Corpus& corpus, std::uint64_t seed) {
    if (corpus.empty()) throw std::invalid_argument("train_lm: empty corpus");
    Rng init(seed);
    Decoder lm = Decoder::create(cfg.arch, vocab_size, cfg.emb_dim, cfg.hidden_dim, 0, init);
    ParameterList named;
    lm.append_parameters(named, "lm");
    std::vector<Tensor> params = tensors_of(named);
    AdamState adam(cfg.lr);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    auto order = iota_order(corpus.size());
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (const auto& batch : make_batches(corpus, order, cfg.batch_size)) {
            Tensor loss = mean(decoder_nll(lm, batch, Tensor{}));
            if (!std::isfinite(loss.item())) throw TrainingDiverged("language model training diverged");
            for (auto& p : params) p.zero_grad();
            backward(loss);
            clip_grad_norm(params, cfg.clip_norm);
            adam_update(adam, params);
        }
    }
    return lm;
}

double mean_sentence_nll(const Decoder& lm, const Corpus& corpus, std::size_t batch_size) {
    if (corpus.empty()) throw std::invalid_argument("mean_sentence_nll: empty corpus");
    NoGradGuard no_grad;
    double total = 0.0;
    const auto order = iota_order(corpus.size());
    for (const auto& batch : make_batches(corpus, order, batch_size)) {
        const Tensor nll = decoder_nll(lm, batch, Tensor{});
        for (double v : nll.values()) total += v;
    }
    return total / static_cast<double>(corpus.size());
}

std::pair<double, double> mean_and_std(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("mean_and_std: no values");
    const double n = static_cast<double>(values.size());
    const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() == 1) return {m, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return {m, std::sqrt(ss / (n - 1.0))};
}

FceRun fce_from_source(const CorpusSource& source, const Corpus& human_test, const Vocab& shared_vocab,
                       const FceConfig& cfg, const std::string& label) {
    if (cfg.repeats < 1) throw std::invalid_argument("fce: repeats must be >= 1");
    if (human_test.empty()) throw std::invalid_argument("fce: empty human test set");
    FceRun run;
    run.policy = label;
    run.repeats = cfg.repeats;
    run.synthetic_size = cfg.synthetic_size;
    run.unk_test = unk_rate(human_test);
    double unk = 0.0, len = 0.0;
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
        const std::uint64_t seed = mix(cfg.seed + 0x632be59bd9b4e019ULL * (r + 1));
        const Corpus synthetic = source(r, seed);
        const bool degenerate = std::all_of(synthetic.sentences.begin(), synthetic.sentences.end(),
                                            [](const Sentence& s) { return content_length(s) == 0; });
        if (synthetic.empty() || degenerate) {
            throw std::runtime_error("fce: synthetic corpus of repeat " + std::to_string(r + 1) +
                                     " is degenerate (every sentence is empty)");
        }
        const Decoder lm = train_lm(cfg.lm, shared_vocab.size(), synthetic, seed);
        run.nll.push_back(mean_sentence_nll(lm, human_test));
        unk += unk_rate(synthetic);
        len += mean_length(synthetic);
        if (r == 0) {
            const auto seqs = content_sequences(synthetic);
            if (seqs.size() >= 2) run.self_bleu4 = self_bleu4(seqs);
        }
    }
    std::tie(run.mean, run.std) = mean_and_std(run.nll);
    run.unk_generated = unk / static_cast<double>(cfg.repeats);
    run.mean_len = len / static_cast<double>(cfg.repeats);
    return run;
}

FceRun fce(const VaeModel& model, const DecodePolicy& policy, const Corpus& human_test, const Vocab& shared_vocab,
           const FceConfig& cfg) {
    const CorpusSource source = [&](std::size_t, std::uint64_t seed) {
        auto gen = generate_corpus(model, cfg.synthetic_size, policy, seed);
        return remap(gen.corpus, model.vocab, shared_vocab);
    };
    return fce_from_source(source, human_test, shared_vocab, cfg, policy.label());
}

std::string fce_csv_header() {
    return "# vaelab-fce v1\n"
           "corpus,C,policy,V,FCE_mean,FCE_std,unk_generated,unk_test,mean_len,self_bleu4\n";
}

std::string fce_csv_row(const std::string& corpus_name, double c_target, const FceRun& run, std::size_t vocab_size) {
    std::ostringstream os;
    os << corpus_name << ',' << fmt(c_target) << ',' << run.policy << ',' << vocab_size << ',' << fmt(run.mean) << ','
       << fmt(run.std) << ',' << fmt(run.unk_generated) << ',' << fmt(run.unk_test) << ',' << fmt(run.mean_len)
       << ',' << fmt(run.self_bleu4) << '\n';
    return os.str();
}

MetricsReport evaluate_metrics(const VaeModel& model, const Corpus& test, std::uint64_t seed) {
    if (test.size() < 2) throw std::invalid_argument("metrics: need at least 2 test sentences");
    MetricsReport r;
    r.c_target = model.config.c_target;
    const RateDistortion rd = rate_distortion(model, test, seed);
    r.rate = rd.rate;
    r.distortion = rd.distortion;
    const EncodedCorpus enc = encode_corpus(model, test, seed);
    r.active_units = active_units(enc.mu);
    r.mean_norm_sq = mean_norm_sq(enc.z);
    if (enc.z.size() > model.latent_dim()) {
        const LogDet ld = log_det_cov(enc.z);
        r.log_det_cov = ld.value;
        r.moment_match_kl = ld.singular ? std::nan("") : moment_match_kl(enc.z);
    } else {
        r.log_det_cov = std::nan("");
        r.moment_match_kl = std::nan("");
    }
    r.buckets = reconstruction_report(model, test, seed).buckets;
    r.unk_percent = unk_rate(test);
    r.mean_len = mean_length(test);
    r.self_bleu4 = self_bleu4(content_sequences(test));
    return r;
}

HomotopyStudy homotopy_study(const VaeModel& model, std::size_t pairs, std::size_t steps,
                             const DecodePolicy& policy, std::uint64_t seed) {
    if (pairs < 1) throw std::invalid_argument("homotopy: pairs must be >= 1");
    HomotopyStudy study;
    const auto ends = prior_samples(2 * pairs, model.latent_dim(), seed);
    Rng rng(mix(seed));
    double total = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
        auto path = homotopy(model, ends[2 * i], ends[2 * i + 1], steps, policy, rng);
        study.distinct.push_back(distinct_count(path));
        total += static_cast<double>(study.distinct.back());
        study.paths.push_back(std::move(path));
    }
    study.mean_distinct = total / static_cast<double>(pairs);
    return study;
}

std::string reconstruction_csv(const ReconstructionReport& report) {
    std::ostringstream os;
    os << "# vaelab-reconstruction v1\n";
    for (const auto& note : report.notes) os << "# note: " << note << '\n';
    os << "bucket,n,bleu2,bleu4,rouge2,rouge4\n";
    for (const auto& b : report.buckets) {
        os << b.bucket << ',' << b.sentences << ',' << fmt(100.0 * b.bleu2) << ',' << fmt(100.0 * b.bleu4) << ','
           << fmt(100.0 * b.rouge2) << ',' << fmt(100.0 * b.rouge4) << '\n';
    }
    return os.str();
}

}  // namespace vaelab
