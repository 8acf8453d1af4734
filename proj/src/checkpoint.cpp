#include "vaelab/vae.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace vaelab {

namespace {

constexpr const char* kMagic = "vaelab-checkpoint";

std::string fmt_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

void put_le(std::string& out, std::uint64_t bits, int bytes) {
    for (int i = 0; i < bytes; ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
    }
}

std::uint64_t get_le(const std::string& in, std::size_t pos, int bytes) {
    std::uint64_t bits = 0;
    for (int i = 0; i < bytes; ++i) {
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    }
    return bits;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& what) {
    throw std::runtime_error("checkpoint: " + what);
}

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ckpt, StorageType storage) {
    const auto& cfg = ckpt.model.config;
    std::ostringstream h;
    h << kMagic << ' ' << Checkpoint::kFormatVersion << '\n';
    h << "[config]\n";
    h << "beta = " << fmt_double(cfg.beta) << '\n';
    h << "c_target = " << fmt_double(cfg.c_target) << '\n';
    h << "objective = " << to_string(cfg.objective) << '\n';
    h << "lr = " << fmt_double(cfg.lr) << '\n';
    h << "epochs = " << cfg.epochs << '\n';
    h << "batch_size = " << cfg.batch_size << '\n';
    h << "seed = " << cfg.seed << '\n';
    h << "arch = " << to_string(cfg.arch) << '\n';
    h << "emb_dim = " << cfg.emb_dim << '\n';
    h << "hidden_dim = " << cfg.hidden_dim << '\n';
    h << "latent_dim = " << cfg.latent_dim << '\n';
    h << "clip_norm = " << fmt_double(cfg.clip_norm) << '\n';
    h << "max_vocab = " << cfg.max_vocab << '\n';
    h << "[state]\n";
    h << "epoch = " << ckpt.epoch << '\n';
    h << "rng = " << ckpt.rng_state << '\n';
    h << "[vocab]\n";
    const auto& tokens = ckpt.model.vocab.tokens();
    h << "count = " << tokens.size() - kReservedCount << '\n';
    for (std::size_t i = kReservedCount; i < tokens.size(); ++i) {
        h << tokens[i] << '\n';
    }
    h << "[tensors]\n";
    const int width = storage == StorageType::f64 ? 8 : 4;
    h << "storage = " << (storage == StorageType::f64 ? "f64" : "f32") << '\n';

    std::string payload;
    for (const auto& [name, t] : ckpt.model.parameters()) {
        h << name << ' ' << t.rank();
        for (auto dim : t.shape()) h << ' ' << dim;
        h << ' ' << payload.size() << ' ' << t.size() << '\n';
        for (double v : t.values()) {
            if (storage == StorageType::f64) {
                put_le(payload, std::bit_cast<std::uint64_t>(v), width);
            } else {
                put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)), width);
            }
        }
    }
    h << "payload " << payload.size() << '\n';
    return h.str() + payload;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) bad("truncated header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };

    {
        std::istringstream first(next_line());
        std::string magic;
        int version = 0;
        first >> magic >> version;
        if (magic != kMagic) bad("not a vaelab checkpoint");
        if (version != Checkpoint::kFormatVersion) bad("unsupported format version " + std::to_string(version));
    }

    std::map<std::string, std::string> config, state;
    std::vector<std::string> vocab_tokens;
    struct Entry {
        std::string name;
        Shape shape;
        std::size_t offset = 0;
        std::size_t count = 0;
    };
    std::vector<Entry> entries;
    std::string storage;
    std::size_t payload_size = 0;
    std::string section;
    std::size_t vocab_expected = 0;
    bool vocab_count_seen = false;

    while (true) {
        std::string line = next_line();
        if (section == "[vocab]" && vocab_count_seen && vocab_tokens.size() < vocab_expected) {
            vocab_tokens.push_back(line);
            continue;
        }
        if (line.rfind("payload ", 0) == 0) {
            payload_size = std::stoull(line.substr(8));
            break;
        }
        if (!line.empty() && line.front() == '[') {
            section = line;
            continue;
        }
        if (section == "[vocab]") {
            const auto eq = line.find('=');
            if (vocab_count_seen || eq == std::string::npos || trim(line.substr(0, eq)) != "count") {
                bad("malformed vocab section at '" + line + "'");
            }
            vocab_expected = std::stoull(trim(line.substr(eq + 1)));
            vocab_count_seen = true;
            continue;
        }
        if (section == "[tensors]" && line.rfind("storage", 0) != 0) {
            std::istringstream is(line);
            Entry e;
            std::size_t rank = 0;
            is >> e.name >> rank;
            e.shape.resize(rank);
            for (auto& d : e.shape) is >> d;
            is >> e.offset >> e.count;
            if (!is) bad("malformed tensor entry '" + line + "'");
            entries.push_back(std::move(e));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) bad("malformed line '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section == "[config]") config[key] = value;
        else if (section == "[state]") state[key] = value;
        else if (section == "[tensors]" && key == "storage") storage = value;
        else bad("unexpected line '" + line + "' in section " + section);
    }
    if (vocab_tokens.size() != vocab_expected) bad("vocab count mismatch");
    if (bytes.size() - pos != payload_size) bad("payload size mismatch");
    const int width = storage == "f64" ? 8 : storage == "f32" ? 4 : 0;
    if (width == 0) bad("unknown storage '" + storage + "'");

    auto get = [&](const char* key) {
        auto it = config.find(key);
        if (it == config.end()) bad(std::string("missing config key ") + key);
        return it->second;
    };
    TrainConfig cfg;
    cfg.beta = std::stod(get("beta"));
    cfg.c_target = std::stod(get("c_target"));
    cfg.objective = objective_kind_from_string(get("objective"));
    cfg.lr = std::stod(get("lr"));
    cfg.epochs = std::stoi(get("epochs"));
    cfg.batch_size = std::stoull(get("batch_size"));
    cfg.seed = std::stoull(get("seed"));
    cfg.arch = cell_kind_from_string(get("arch"));
    cfg.emb_dim = std::stoull(get("emb_dim"));
    cfg.hidden_dim = std::stoull(get("hidden_dim"));
    cfg.latent_dim = std::stoull(get("latent_dim"));
    cfg.clip_norm = std::stod(get("clip_norm"));
    cfg.max_vocab = std::stoull(get("max_vocab"));

    Checkpoint ckpt;
    ckpt.model = VaeModel::create(cfg, Vocab(vocab_tokens));
    ckpt.epoch = state.count("epoch") ? std::stoi(state["epoch"]) : 0;
    ckpt.rng_state = state.count("rng") ? state["rng"] : std::string{};

    std::map<std::string, const Entry*> by_name;
    for (const auto& e : entries) by_name[e.name] = &e;
    for (auto& [name, t] : ckpt.model.parameters()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) bad("missing tensor " + name);
        const Entry& e = *it->second;
        if (e.shape != t.shape() || e.count != t.size()) {
            bad("tensor " + name + " has shape " + shape_string(e.shape) + ", model expects " +
                shape_string(t.shape()));
        }
        if (e.offset + e.count * width > payload_size) bad("tensor " + name + " overruns payload");
        Tensor target = t;
        auto values = target.mutable_values();
        for (std::size_t i = 0; i < e.count; ++i) {
            const std::size_t at = pos + e.offset + i * width;
            values[i] = width == 8 ? std::bit_cast<double>(get_le(bytes, at, 8))
                                   : static_cast<double>(std::bit_cast<float>(
                                         static_cast<std::uint32_t>(get_le(bytes, at, 4))));
        }
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, StorageType storage) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    const std::string bytes = checkpoint_bytes(ckpt, storage);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return checkpoint_from_bytes(ss.str());
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot hash " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 14];
    while (is.read(buf, sizeof buf) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace vaelab
