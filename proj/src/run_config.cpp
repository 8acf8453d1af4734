#include "vaelab/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace vaelab {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& name) {
    const auto& keys = config_keys();
    auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == name; });
    return it == keys.end() ? nullptr : &*it;
}

template <typename T, typename Parse>
T convert(const std::string& key, const std::string& text, Parse parse) {
    try {
        std::size_t used = 0;
        T v = parse(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: bad value '" + text + "' for " + key);
    }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"train.preset", false, "desk (default) or paper"},
        {"train.beta", false, "penalty weight"},
        {"train.c", false, "KL capacity target in nats"},
        {"train.objective", false, "abs or max"},
        {"train.lr", false, "Adam learning rate"},
        {"train.epochs", false, "training epochs"},
        {"train.batch_size", false, "minibatch size"},
        {"train.arch", false, "lstm or gru"},
        {"train.emb_dim", false, "embedding size"},
        {"train.hidden_dim", false, "recurrent state size"},
        {"train.latent_dim", false, "latent dimension"},
        {"train.clip_norm", false, "global gradient norm cap"},
        {"train.max_vocab", false, "vocabulary cap (non-reserved tokens)"},
        {"data.train", true, "training text, one sentence per line"},
        {"data.dev", true, "development text"},
        {"data.test", true, "held-out text"},
        {"data.pairs", true, "minimal pairs TSV"},
        {"data.vocab", true, "vocabulary file"},
        {"decode.policy", false, "greedy, top_k or nucleus"},
        {"decode.k", false, "top-k cutoff"},
        {"decode.p", false, "nucleus mass"},
        {"decode.max_len", false, "maximum generated tokens"},
        {"run.seed", false, "random seed"},
        {"run.out", true, "output directory"},
        {"run.checkpoint", true, "model checkpoint"},
        {"generate.n", false, "sentences to generate"},
        {"homotopy.steps", false, "points on each path"},
        {"homotopy.pairs", false, "endpoint pairs"},
        {"fce.synthetic_size", false, "synthetic corpus size per repeat"},
        {"fce.repeats", false, "FCE repeats"},
        {"probe.sample_codes", false, "use posterior samples instead of means"},
        {"oracle.world", true, "world specification file"},
        {"oracle.samples", false, "Monte-Carlo samples"},
    };
    return keys;
}

RunConfig RunConfig::parse(std::istream& is, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    std::string section, line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "config line " + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        if (section.empty()) throw ConfigError(where + ": key outside of a [section]");
        const std::string key = section + "." + trim(line.substr(0, eq));
        try {
            cfg.set(key, trim(line.substr(eq + 1)), base_dir);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path.string());
    return parse(is, std::filesystem::absolute(path).parent_path());
}

void RunConfig::set(const std::string& key, const std::string& value, const std::filesystem::path& base) {
    const ConfigKey* k = find_key(key);
    if (!k) throw ConfigError("unknown config key '" + key + "'");
    if (value.empty()) throw ConfigError("empty value for " + key);
    if (k->is_path) {
        std::filesystem::path p(value);
        values_[key] = (p.is_absolute() ? p : (base / p)).lexically_normal().string();
    } else {
        values_[key] = value;
    }
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    return convert<double>(key, get(key), [](const std::string& s, std::size_t* u) { return std::stod(s, u); });
}

std::uint64_t RunConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string text = get(key);
    if (!text.empty() && text.front() == '-') throw ConfigError("config: " + key + " must be non-negative");
    return convert<std::uint64_t>(key, text, [](const std::string& s, std::size_t* u) { return std::stoull(s, u); });
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: " + key + " must be true or false");
}

std::filesystem::path RunConfig::path(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing required setting " + key);
    return get(key);
}

TrainConfig RunConfig::train_config() const {
    const std::string preset = get("train.preset", "desk");
    if (preset != "desk" && preset != "paper") throw ConfigError("config: train.preset must be desk or paper");
    TrainConfig t = preset == "paper" ? TrainConfig::paper_scale() : TrainConfig{};
    t.beta = get_double("train.beta", t.beta);
    t.c_target = get_double("train.c", t.c_target);
    if (has("train.objective")) {
        try {
            t.objective = objective_kind_from_string(get("train.objective"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    t.lr = get_double("train.lr", t.lr);
    t.epochs = static_cast<int>(get_uint("train.epochs", static_cast<std::uint64_t>(t.epochs)));
    t.batch_size = get_uint("train.batch_size", t.batch_size);
    if (has("train.arch")) {
        try {
            t.arch = cell_kind_from_string(get("train.arch"));
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    t.emb_dim = get_uint("train.emb_dim", t.emb_dim);
    t.hidden_dim = get_uint("train.hidden_dim", t.hidden_dim);
    t.latent_dim = get_uint("train.latent_dim", t.latent_dim);
    t.clip_norm = get_double("train.clip_norm", t.clip_norm);
    t.max_vocab = get_uint("train.max_vocab", t.max_vocab);
    t.seed = get_uint("run.seed", t.seed);
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return t;
}

DecodePolicy RunConfig::decode_policy() const {
    DecodePolicy p;
    try {
        p.kind = decode_kind_from_string(get("decode.policy", "greedy"));
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    p.k = get_uint("decode.k", p.k);
    p.p = get_double("decode.p", p.p);
    p.max_len = get_uint("decode.max_len", p.max_len);
    p.seed = get_uint("run.seed", p.seed);
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return p;
}

std::string RunConfig::snapshot() const {
    std::ostringstream os;
    std::string section;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            os << '[' << sec << "]\n";
            section = sec;
        }
        os << key.substr(dot + 1) << " = " << value << '\n';
    }
    return os.str();
}

}  // namespace vaelab
