#include "vaelab/info_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

namespace vaelab {

namespace {

using Rng = std::mt19937_64;

// Welford running mean / variance.
struct Running {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++n;
        const double delta = v - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (v - mean);
    }

    Estimate estimate() const {
        Estimate e;
        e.value = mean;
        e.samples = n;
        e.se = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
        return e;
    }
};

double total_mass(const DiscreteWorld& w) {
    double s = 0.0;
    for (double p : w.p) s += p;
    return s;
}

double log_gaussian(std::span<const double> z, std::span<const double> mu, std::span<const double> var) {
    double acc = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        const double d = z[j] - mu[j];
        acc += d * d / var[j] + std::log(2.0 * std::numbers::pi * var[j]);
    }
    return -0.5 * acc;
}

struct Sampler {
    const DiscreteWorld& world;
    Rng rng;
    std::discrete_distribution<std::size_t> pick;
    std::normal_distribution<double> normal{0.0, 1.0};
    std::vector<double> z;

    Sampler(const DiscreteWorld& w, std::uint64_t seed)
        : world(w), rng(seed), pick(w.p.begin(), w.p.end()), z(w.dz) {}

    std::size_t draw() {
        const std::size_t x = pick(rng);
        const auto& e = world.encoders[x];
        for (std::size_t j = 0; j < world.dz; ++j) z[j] = e.mu[j] + std::sqrt(e.var[j]) * normal(rng);
        return x;
    }
};

// Log densities of z under every encoder, and the mixture pieces
//   log q(z) = top + log(mix / mass)
// arranged so that identical encoders give mix == mass bit for bit.
struct MixtureTerms {
    std::vector<double> log_q;
    double top = 0.0;
    double mix = 0.0;
    double mass = 0.0;
};

MixtureTerms mixture_terms(const DiscreteWorld& w, std::span<const double> z) {
    MixtureTerms t;
    t.log_q.resize(w.inputs());
    t.top = -std::numeric_limits<double>::infinity();
    for (std::size_t x = 0; x < w.inputs(); ++x) {
        t.log_q[x] = log_gaussian(z, w.encoders[x].mu, w.encoders[x].var);
        if (w.p[x] > 0.0) t.top = std::max(t.top, t.log_q[x]);
    }
    for (std::size_t x = 0; x < w.inputs(); ++x) {
        if (w.p[x] == 0.0) continue;
        t.mix += w.p[x] * std::exp(t.log_q[x] - t.top);
        t.mass += w.p[x];
    }
    return t;
}

void check_samples(std::size_t samples, std::size_t minimum, const char* what) {
    if (samples < minimum) {
        throw std::invalid_argument(std::string(what) + ": need at least " + std::to_string(minimum) + " samples");
    }
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw std::invalid_argument("world: bad number '" + item + "' in " + what);
        }
    }
    if (out.empty()) throw std::invalid_argument("world: empty list for " + what);
    return out;
}

std::string join(const std::vector<double>& v) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

}  // namespace

void DiscreteWorld::validate() const {
    if (p.empty()) throw std::invalid_argument("world: no inputs");
    if (dz == 0) throw std::invalid_argument("world: dz must be >= 1");
    if (encoders.size() != p.size()) throw std::invalid_argument("world: one encoder per input required");
    double s = 0.0;
    for (std::size_t x = 0; x < p.size(); ++x) {
        if (!(p[x] >= 0.0)) throw std::invalid_argument("world: negative probability for input " + std::to_string(x));
        s += p[x];
        const auto& e = encoders[x];
        if (e.mu.size() != dz || e.var.size() != dz) {
            throw std::invalid_argument("world: input " + std::to_string(x) + " does not have dimension " +
                                        std::to_string(dz));
        }
        for (double v : e.var) {
            if (!(v > 0.0)) throw std::invalid_argument("world: non-positive variance for input " + std::to_string(x));
        }
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("world: probabilities sum to " + std::to_string(s));
}

DiscreteWorld DiscreteWorld::uniform(std::vector<GaussianEncoder> encoders) {
    DiscreteWorld w;
    if (encoders.empty()) throw std::invalid_argument("world: no inputs");
    w.dz = encoders.front().mu.size();
    w.p.assign(encoders.size(), 1.0 / static_cast<double>(encoders.size()));
    w.encoders = std::move(encoders);
    w.validate();
    return w;
}

DiscreteWorld DiscreteWorld::collapsed(std::size_t inputs, std::size_t dz) {
    std::vector<GaussianEncoder> enc(inputs, GaussianEncoder{std::vector<double>(dz, 0.0), std::vector<double>(dz, 1.0)});
    return uniform(std::move(enc));
}

double entropy(const DiscreteWorld& world) {
    world.validate();
    const double mass = total_mass(world);
    // weighted incremental mean, exact when all terms are equal
    double h = 0.0, seen = 0.0;
    for (double p : world.p) {
        if (p == 0.0) continue;
        seen += p;
        h += (p / seen) * (-std::log(p / mass) - h);
    }
    return h;
}

double rate(const DiscreteWorld& world) {
    world.validate();
    double r = 0.0;
    for (std::size_t x = 0; x < world.inputs(); ++x) {
        const auto& e = world.encoders[x];
        double kl = 0.0;
        for (std::size_t j = 0; j < world.dz; ++j) {
            kl += e.mu[j] * e.mu[j] + e.var[j] - 1.0 - std::log(e.var[j]);
        }
        r += world.p[x] * 0.5 * kl;
    }
    return r;
}

double log_encoder_density(const DiscreteWorld& world, std::size_t x, std::span<const double> z) {
    if (x >= world.inputs()) throw std::out_of_range("world: input index out of range");
    if (z.size() != world.dz) throw std::invalid_argument("world: z has the wrong dimension");
    return log_gaussian(z, world.encoders[x].mu, world.encoders[x].var);
}

Estimate mutual_information_mc(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed) {
    world.validate();
    check_samples(samples, 1000, "mutual_information_mc");
    Sampler s(world, seed);
    Running acc;
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t x = s.draw();
        const auto t = mixture_terms(world, s.z);
        // log q(z|x) - log q(z)
        acc.add(-((t.top - t.log_q[x]) + std::log(t.mix / t.mass)));
    }
    return acc.estimate();
}

LogDecoder bayes_decoder(const DiscreteWorld& world) {
    world.validate();
    return [&world](std::span<const double> z) {
        const auto t = mixture_terms(world, z);
        std::vector<double> out(world.inputs());
        const double shift = std::log(t.mix / t.mass);
        for (std::size_t x = 0; x < world.inputs(); ++x) {
            out[x] = world.p[x] == 0.0 ? -std::numeric_limits<double>::infinity()
                                       : std::log(world.p[x] / t.mass) - (t.top - t.log_q[x]) - shift;
        }
        return out;
    };
}

LogDecoder uniform_decoder(const DiscreteWorld& world) {
    const std::size_t n = world.inputs();
    return [n](std::span<const double>) {
        return std::vector<double>(n, -std::log(static_cast<double>(n)));
    };
}

Estimate distortion_mc(const DiscreteWorld& world, const LogDecoder& decoder, std::size_t samples,
                       std::uint64_t seed) {
    world.validate();
    check_samples(samples, 1, "distortion_mc");
    Sampler s(world, seed);
    Running acc;
    for (std::size_t i = 0; i < samples; ++i) {
        const std::size_t x = s.draw();
        acc.add(-decoder(s.z)[x]);
    }
    return acc.estimate();
}

Estimate bayes_distortion(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed) {
    return distortion_mc(world, bayes_decoder(world), samples, seed);
}

Estimate aggregate_kl_mc(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed) {
    world.validate();
    check_samples(samples, 1, "aggregate_kl_mc");
    Sampler s(world, seed);
    const std::vector<double> zero(world.dz, 0.0), one(world.dz, 1.0);
    Running acc;
    for (std::size_t i = 0; i < samples; ++i) {
        s.draw();
        const auto t = mixture_terms(world, s.z);
        const double log_q = t.top + std::log(t.mix / t.mass);
        acc.add(log_q - log_gaussian(s.z, zero, one));
    }
    return acc.estimate();
}

std::string BoundsReport::describe() const {
    std::ostringstream os;
    os << std::setprecision(6);
    os << "H=" << entropy << " D=" << distortion.value << " (se " << distortion.se << ") I=" << information.value
       << " (se " << information.se << ") R=" << rate << " H-D=" << entropy - distortion.value
       << " lower_margin=" << lower_margin << " upper_margin=" << upper_margin << (holds ? " ok" : " VIOLATED");
    return os.str();
}

BoundsReport bounds_check(const DiscreteWorld& world, std::size_t samples, std::uint64_t seed) {
    BoundsReport r;
    r.entropy = entropy(world);
    r.rate = rate(world);
    r.information = mutual_information_mc(world, samples, seed);
    r.distortion = bayes_distortion(world, samples, seed ^ 0xd1b54a32d192ed03ULL);
    const double se_lower = std::hypot(r.information.se, r.distortion.se);
    r.lower_margin = r.information.value + 3.0 * se_lower - (r.entropy - r.distortion.value);
    r.upper_margin = r.rate + 3.0 * r.information.se - r.information.value;
    r.holds = r.lower_margin >= 0.0 && r.upper_margin >= 0.0;
    return r;
}

DiscreteWorld parse_world(std::istream& is) {
    DiscreteWorld w;
    w.dz = 0;
    std::vector<std::optional<double>> probs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue;
        const std::string where = "world line " + std::to_string(lineno);
        if (head == "dz" || head.rfind("dz=", 0) == 0) {
            std::string rest = head.size() > 2 ? head.substr(3) : std::string{};
            std::string tok;
            while (ls >> tok) rest += tok;
            if (!rest.empty() && rest.front() == '=') rest.erase(0, 1);
            try {
                w.dz = std::stoul(rest);
            } catch (const std::exception&) {
                throw std::invalid_argument(where + ": bad dz");
            }
            continue;
        }
        if (head != "input") throw std::invalid_argument(where + ": expected 'dz = N' or 'input ...'");
        if (w.dz == 0) throw std::invalid_argument(where + ": dz must be declared before inputs");
        GaussianEncoder e;
        std::optional<double> p;
        std::string field;
        while (ls >> field) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) throw std::invalid_argument(where + ": expected key=value, got '" + field + "'");
            const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
            if (key == "p") {
                p = parse_list(value, where + " p").front();
            } else if (key == "mu") {
                e.mu = parse_list(value, where + " mu");
            } else if (key == "var") {
                e.var = parse_list(value, where + " var");
            } else {
                throw std::invalid_argument(where + ": unknown key '" + key + "'");
            }
        }
        if (e.var.size() == 1 && w.dz > 1) e.var.assign(w.dz, e.var.front());
        if (e.mu.size() != w.dz || e.var.size() != w.dz) {
            throw std::invalid_argument(where + ": mu and var need " + std::to_string(w.dz) + " values");
        }
        w.encoders.push_back(std::move(e));
        probs.push_back(p);
    }
    if (probs.empty()) throw std::invalid_argument("world: no inputs");
    const bool any = std::any_of(probs.begin(), probs.end(), [](const auto& p) { return p.has_value(); });
    const bool all = std::all_of(probs.begin(), probs.end(), [](const auto& p) { return p.has_value(); });
    if (any && !all) throw std::invalid_argument("world: give p on every input or on none");
    for (const auto& p : probs) w.p.push_back(all ? *p : 1.0 / static_cast<double>(probs.size()));
    w.validate();
    return w;
}

DiscreteWorld load_world(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read world file " + path.string());
    return parse_world(is);
}

std::string format_world(const DiscreteWorld& world) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "dz = " << world.dz << '\n';
    for (std::size_t x = 0; x < world.inputs(); ++x) {
        os << "input p=" << world.p[x] << " mu=" << join(world.encoders[x].mu) << " var=" << join(world.encoders[x].var)
           << '\n';
    }
    return os.str();
}

}  // namespace vaelab
