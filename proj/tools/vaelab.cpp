// vaelab: train and evaluate capacity-constrained sequence VAEs.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad arguments or config.
// Errors are printed as one line: "vaelab: error: <kind>: <message>".

#include "vaelab/desk_corpus.hpp"
#include "vaelab/eval_harness.hpp"
#include "vaelab/info_oracle.hpp"
#include "vaelab/run_config.hpp"
#include "vaelab/syntax_probe.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <random>

#ifndef VAELAB_VERSION
#define VAELAB_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace vaelab;

namespace {

struct Invocation {
    std::string name;
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> overrides;  // key, value
};

void bind(CLI::App* sub, Invocation& inv, const std::string& flag, const std::string& key) {
    const ConfigKey* k = nullptr;
    for (const auto& c : config_keys())
        if (c.name == key) k = &c;
    sub->add_option_function<std::string>(
        flag, [&inv, key](const std::string& v) { inv.overrides.emplace_back(key, v); },
        k ? k->help + " (" + key + ")" : key);
}

void common(CLI::App* sub, Invocation& inv) {
    sub->add_option("--config", inv.config_file, "key = value config file with [section] headers");
    bind(sub, inv, "--seed", "run.seed");
    bind(sub, inv, "--out", "run.out");
}

void decoding_flags(CLI::App* sub, Invocation& inv) {
    bind(sub, inv, "--policy", "decode.policy");
    bind(sub, inv, "--k", "decode.k");
    bind(sub, inv, "--p", "decode.p");
    bind(sub, inv, "--max-len", "decode.max_len");
}

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

class Run {
public:
    Run(std::string subcommand, RunConfig cfg) : sub_(std::move(subcommand)), cfg_(std::move(cfg)) {
        if (!cfg_.has("run.seed")) {
            std::random_device rd;
            const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
            cfg_.set("run.seed", std::to_string(seed));
            seed_source_ = "random";
            std::cerr << "vaelab: no --seed given, using " << seed << '\n';
        }
        seed_ = cfg_.get_uint("run.seed", 0);
        out_ = cfg_.has("run.out") ? cfg_.path("run.out") : fs::path("vaelab_out");
        fs::create_directories(out_);
    }

    const RunConfig& cfg() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    const fs::path& out() const { return out_; }

    Checkpoint checkpoint() {
        const fs::path p = cfg_.path("run.checkpoint");
        hashes_["checkpoint"] = file_hash(p);
        return load_checkpoint(p);
    }

    void note_hash(const std::string& what, const fs::path& p) { hashes_[what] = file_hash(p); }

    void write(const std::string& name, const std::string& content) const {
        std::ofstream os(out_ / name, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + (out_ / name).string());
        os << content;
    }

    // The only file with a timestamp.
    void manifest() const {
        std::ostringstream os;
        os << "# vaelab-manifest v1\n";
        os << "subcommand = " << sub_ << '\n';
        os << "version = " << VAELAB_VERSION << '\n';
        os << "timestamp = " << now_utc() << '\n';
        os << "seed = " << seed_ << '\n';
        os << "seed_source = " << seed_source_ << '\n';
        for (const auto& [what, h] : hashes_) os << what << "_fnv1a64 = " << h << '\n';
        os << "# config snapshot\n" << cfg_.snapshot();
        write("manifest.txt", os.str());
    }

private:
    std::string sub_;
    RunConfig cfg_;
    std::uint64_t seed_ = 0;
    std::string seed_source_ = "given";
    fs::path out_;
    std::map<std::string, std::string> hashes_;
};

Corpus load_corpus(const RunConfig& cfg, const std::string& key, const Vocab& vocab, Split split) {
    const fs::path p = cfg.path(key);
    IngestStats stats;
    Corpus c = make_corpus(read_text(p), vocab, split, p.string(), kDefaultLengthCap, &stats);
    if (stats.dropped_too_long > 0) {
        std::cerr << "vaelab: dropped " << stats.dropped_too_long << " sentences longer than " << kDefaultLengthCap
                  << " tokens from " << p.string() << '\n';
    }
    if (c.empty()) throw std::runtime_error("no usable sentences in " + p.string());
    return c;
}

std::string lines_of(const std::vector<std::vector<TokenId>>& rows, const Vocab& vocab) {
    std::ostringstream os;
    for (const auto& r : rows) {
        Sentence s{kBosId};
        s.insert(s.end(), r.begin(), r.end());
        s.push_back(kEosId);
        os << vocab.decode_line(s) << '\n';
    }
    return os.str();
}

int cmd_train(Run& run) {
    const auto& cfg = run.cfg();
    const TrainConfig tc = cfg.train_config();
    const TokenizedText train_text = read_text(cfg.path("data.train"));
    const Vocab vocab = cfg.has("data.vocab") ? Vocab::load(cfg.path("data.vocab")) : build_vocab(train_text, tc.max_vocab);
    const Corpus train_set = make_corpus(train_text, vocab, Split::train, cfg.get("data.train"));
    const Corpus dev_set = load_corpus(cfg, "data.dev", vocab, Split::dev);
    std::cerr << "vaelab: training " << to_string(tc.arch) << " C=" << tc.c_target << " beta=" << tc.beta << " on "
              << train_set.size() << " sentences, |V|=" << vocab.size() << '\n';
    const TrainResult result = train(tc, vocab, train_set, dev_set, [](const EpochTrace& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " dev_D " << e.dev_distortion << " dev_R "
                  << e.dev_rate << '\n';
    });
    save_checkpoint(run.out() / "model.ckpt", result.checkpoint);
    run.note_hash("output_checkpoint", run.out() / "model.ckpt");
    vocab.save(run.out() / "vocab.txt");
    run.write("trace.csv", trace_csv(result.trace));
    return 0;
}

int cmd_reconstruct(Run& run) {
    const Checkpoint ckpt = run.checkpoint();
    const Corpus test = load_corpus(run.cfg(), "data.test", ckpt.model.vocab, Split::test);
    const auto report = reconstruction_report(ckpt.model, test, run.seed());
    run.write("reconstruction.csv", reconstruction_csv(report));
    run.write("reconstructions.txt", lines_of(report.candidates, ckpt.model.vocab));
    for (const auto& n : report.notes) std::cerr << "vaelab: note: " << n << '\n';
    return 0;
}

int cmd_generate(Run& run) {
    const Checkpoint ckpt = run.checkpoint();
    const DecodePolicy policy = run.cfg().decode_policy();
    const std::size_t n = run.cfg().get_uint("generate.n", 100);
    const auto gen = generate_corpus(ckpt.model, n, policy, run.seed());
    if (gen.empty > 0) std::cerr << "vaelab: warning: " << gen.empty << " empty sentences kept\n";
    write_text(run.out() / "generated.txt", to_text(gen.corpus, ckpt.model.vocab));
    return 0;
}

int cmd_metrics(Run& run) {
    const Checkpoint ckpt = run.checkpoint();
    const Corpus test = load_corpus(run.cfg(), "data.test", ckpt.model.vocab, Split::test);
    const MetricsReport r = evaluate_metrics(ckpt.model, test, run.seed());
    run.write("metrics.csv", metrics_csv_header() + metrics_csv_row(test.source, r));
    return 0;
}

int cmd_fce(Run& run) {
    const auto& cfg = run.cfg();
    const Checkpoint ckpt = run.checkpoint();
    const Vocab shared = cfg.has("data.vocab") ? Vocab::load(cfg.path("data.vocab")) : ckpt.model.vocab;
    const Corpus test = load_corpus(cfg, "data.test", shared, Split::test);
    FceConfig fc;
    fc.lm = LmConfig::from(ckpt.model.config);
    if (cfg.has("train.epochs")) fc.lm.epochs = static_cast<int>(cfg.get_uint("train.epochs", 10));
    fc.repeats = cfg.get_uint("fce.repeats", 3);
    fc.synthetic_size = cfg.get_uint("fce.synthetic_size", 5000);
    fc.seed = run.seed();
    const FceRun r = fce(ckpt.model, cfg.decode_policy(), test, shared, fc);
    run.write("fce.csv", fce_csv_header() + fce_csv_row(test.source, ckpt.model.config.c_target, r, shared.size()));
    return 0;
}

int cmd_probe(Run& run) {
    const Checkpoint ckpt = run.checkpoint();
    const auto pairs = read_pairs(run.cfg().path("data.pairs"));
    const VaeScorer scorer(ckpt.model, run.cfg().get_bool("probe.sample_codes", false), run.seed());
    run.write("probe.csv", probe_csv(probe(scorer, ckpt.model.vocab, pairs)));
    return 0;
}

int cmd_homotopy(Run& run) {
    const Checkpoint ckpt = run.checkpoint();
    const auto& cfg = run.cfg();
    const auto study = homotopy_study(ckpt.model, cfg.get_uint("homotopy.pairs", 50), cfg.get_uint("homotopy.steps", 7),
                                      cfg.decode_policy(), run.seed());
    std::ostringstream paths;
    for (std::size_t i = 0; i < study.paths.size(); ++i) {
        paths << "# path " << i + 1 << " distinct=" << study.distinct[i] << '\n';
        paths << lines_of(study.paths[i], ckpt.model.vocab);
    }
    run.write("homotopy.txt", paths.str());
    std::ostringstream summary;
    summary << "# vaelab-homotopy v1\npairs,steps,mean_distinct\n"
            << study.paths.size() << ',' << cfg.get_uint("homotopy.steps", 7) << ',' << std::setprecision(10)
            << study.mean_distinct << '\n';
    run.write("homotopy.csv", summary.str());
    return 0;
}

int cmd_oracle(Run& run) {
    const auto& cfg = run.cfg();
    const fs::path world_path = cfg.path("oracle.world");
    const DiscreteWorld world = load_world(world_path);
    run.note_hash("world", world_path);
    const std::size_t samples = cfg.get_uint("oracle.samples", kDefaultOracleSamples);
    const BoundsReport r = bounds_check(world, samples, run.seed());
    const Estimate kl = aggregate_kl_mc(world, samples, run.seed() ^ 0x5851f42d4c957f2dULL);
    std::ostringstream os;
    os << std::setprecision(10);
    os << "# vaelab-oracle v1\n";
    os << "H,D,D_se,I,I_se,R,agg_kl,agg_kl_se,lower_margin,upper_margin,holds\n";
    os << r.entropy << ',' << r.distortion.value << ',' << r.distortion.se << ',' << r.information.value << ','
       << r.information.se << ',' << r.rate << ',' << kl.value << ',' << kl.se << ',' << r.lower_margin << ','
       << r.upper_margin << ',' << (r.holds ? "true" : "false") << '\n';
    run.write("oracle.csv", os.str());
    std::cout << r.describe() << '\n';
    if (!r.holds) throw std::runtime_error("information bounds violated: " + r.describe());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vaelab: capacity-constrained sequence VAEs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", VAELAB_VERSION);
    Invocation inv;

    struct Entry {
        const char* name;
        const char* help;
        int (*fn)(Run&);
    };
    const std::vector<Entry> entries = {
        {"train", "train a model; writes model.ckpt, vocab.txt and trace.csv", cmd_train},
        {"reconstruct", "bucketed BLEU/ROUGE of greedy reconstructions", cmd_reconstruct},
        {"generate", "decode sentences from prior samples", cmd_generate},
        {"metrics", "one metrics CSV row for a held-out corpus", cmd_metrics},
        {"fce", "forward cross-entropy of generated text", cmd_fce},
        {"probe", "minimal-pair likelihood probe", cmd_probe},
        {"homotopy", "decode interpolation paths between prior samples", cmd_homotopy},
        {"oracle", "information bounds on a finite Gaussian world", cmd_oracle},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        common(sub, inv);
        subs[e.name] = sub;
    }
    auto* train = subs["train"];
    bind(train, inv, "--preset", "train.preset");
    bind(train, inv, "--c", "train.c");
    bind(train, inv, "--beta", "train.beta");
    bind(train, inv, "--objective", "train.objective");
    bind(train, inv, "--arch", "train.arch");
    bind(train, inv, "--lr", "train.lr");
    bind(train, inv, "--epochs", "train.epochs");
    bind(train, inv, "--batch-size", "train.batch_size");
    bind(train, inv, "--emb-dim", "train.emb_dim");
    bind(train, inv, "--hidden-dim", "train.hidden_dim");
    bind(train, inv, "--latent-dim", "train.latent_dim");
    bind(train, inv, "--clip-norm", "train.clip_norm");
    bind(train, inv, "--max-vocab", "train.max_vocab");
    bind(train, inv, "--train", "data.train");
    bind(train, inv, "--dev", "data.dev");
    bind(train, inv, "--vocab", "data.vocab");
    for (const char* name : {"reconstruct", "generate", "metrics", "fce", "probe", "homotopy"}) {
        bind(subs[name], inv, "--checkpoint", "run.checkpoint");
    }
    for (const char* name : {"reconstruct", "metrics", "fce"}) bind(subs[name], inv, "--test", "data.test");
    for (const char* name : {"generate", "fce", "homotopy"}) decoding_flags(subs[name], inv);
    bind(subs["generate"], inv, "--n", "generate.n");
    bind(subs["fce"], inv, "--vocab", "data.vocab");
    bind(subs["fce"], inv, "--repeats", "fce.repeats");
    bind(subs["fce"], inv, "--synthetic-size", "fce.synthetic_size");
    bind(subs["fce"], inv, "--epochs", "train.epochs");
    bind(subs["probe"], inv, "--pairs", "data.pairs");
    bind(subs["probe"], inv, "--sample-codes", "probe.sample_codes");
    bind(subs["homotopy"], inv, "--steps", "homotopy.steps");
    bind(subs["homotopy"], inv, "--pairs", "homotopy.pairs");
    bind(subs["oracle"], inv, "--world", "oracle.world");
    bind(subs["oracle"], inv, "--samples", "oracle.samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const Entry* chosen = nullptr;
    for (const auto& e : entries)
        if (subs[e.name]->parsed()) chosen = &e;

    std::optional<Run> run;
    try {
        RunConfig cfg = inv.config_file.empty() ? RunConfig{} : RunConfig::load(inv.config_file);
        for (const auto& [key, value] : inv.overrides) cfg.set(key, value);
        // surface config problems before any work starts
        if (std::string(chosen->name) == "train") cfg.train_config();
        if (cfg.has("decode.policy") || cfg.has("decode.k") || cfg.has("decode.p")) cfg.decode_policy();
        run.emplace(chosen->name, std::move(cfg));
    } catch (const ConfigError& e) {
        std::cerr << "vaelab: error: config: " << e.what() << '\n' << subs[chosen->name]->help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "vaelab: error: runtime: " << e.what() << '\n';
        return 1;
    }

    try {
        const int code = chosen->fn(*run);
        run->manifest();
        return code;
    } catch (const ConfigError& e) {
        std::cerr << "vaelab: error: config: " << e.what() << '\n' << subs[chosen->name]->help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "vaelab: error: runtime: " << e.what() << '\n';
        return 1;
    }
}
