#include "vaelab/metrics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace vaelab {

namespace {

std::size_t check_dims(const Vectors& samples, const char* what) {
    if (samples.empty()) throw std::invalid_argument(std::string(what) + ": no samples");
    const std::size_t d = samples.front().size();
    for (const auto& s : samples) {
        if (s.size() != d) throw std::invalid_argument(std::string(what) + ": ragged samples");
    }
    return d;
}

struct Moments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // unbiased
};

Moments moments(const Vectors& samples, const char* what) {
    const std::size_t d = check_dims(samples, what);
    const std::size_t n = samples.size();
    if (n <= d) {
        throw std::invalid_argument(std::string(what) + ": need more samples (" + std::to_string(n) +
                                    ") than dimensions (" + std::to_string(d) + ")");
    }
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i, j) = samples[i][j];
    Moments m;
    m.mean = x.colwise().mean().transpose();
    Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
    m.cov = centered.transpose() * centered / static_cast<double>(n - 1);
    return m;
}

struct SeqHash {
    std::size_t operator()(const TokenSeq& s) const noexcept {
        std::size_t h = 0xcbf29ce484222325ULL;
        for (auto t : s) {
            h ^= t + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        }
        return h;
    }
};

using NgramCounts = std::unordered_map<TokenSeq, std::size_t, SeqHash>;

NgramCounts ngram_counts(const TokenSeq& s, std::size_t n) {
    NgramCounts out;
    if (s.size() < n) return out;
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
        ++out[TokenSeq(s.begin() + i, s.begin() + i + n)];
    }
    return out;
}

std::size_t ngram_total(const TokenSeq& s, std::size_t n) { return s.size() >= n ? s.size() - n + 1 : 0; }

// Geometric mean of smoothed precisions times the brevity penalty.
double combine_bleu(const std::vector<std::size_t>& matches, const std::vector<std::size_t>& totals,
                    double cand_len, double ref_len) {
    double log_sum = 0.0;
    std::size_t orders = 0;
    for (std::size_t k = 0; k < matches.size(); ++k) {
        if (totals[k] == 0) continue;
        const double p = matches[k] > 0 ? static_cast<double>(matches[k]) / static_cast<double>(totals[k])
                                        : 1.0 / (2.0 * static_cast<double>(totals[k]));
        log_sum += std::log(p);
        ++orders;
    }
    if (orders == 0 || cand_len == 0.0) return 0.0;
    const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(orders));
}

void check_order(std::size_t n) {
    if (n == 0) throw std::invalid_argument("n-gram order must be >= 1");
}

std::size_t closest_length(std::size_t cand, const std::vector<const TokenSeq*>& refs) {
    std::size_t best = refs.front()->size();
    for (const auto* r : refs) {
        const auto diff = [&](std::size_t len) { return len > cand ? len - cand : cand - len; };
        if (diff(r->size()) < diff(best) || (diff(r->size()) == diff(best) && r->size() < best)) {
            best = r->size();
        }
    }
    return best;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
}

}  // namespace

std::size_t active_units(const Vectors& posterior_means, double delta) {
    if (posterior_means.size() < 2) throw std::invalid_argument("active_units: need at least 2 vectors");
    const std::size_t d = check_dims(posterior_means, "active_units");
    const double n = static_cast<double>(posterior_means.size());
    std::size_t active = 0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& v : posterior_means) mean += v[j];
        mean /= n;
        double var = 0.0;
        for (const auto& v : posterior_means) var += (v[j] - mean) * (v[j] - mean);
        var /= (n - 1.0);
        if (var > delta) ++active;
    }
    return active;
}

LogDet log_det_cov(const Vectors& samples) {
    const Moments m = moments(samples, "log_det_cov");
    Eigen::LLT<Eigen::MatrixXd> llt(m.cov);
    LogDet out;
    if (llt.info() != Eigen::Success) {
        out.value = -std::numeric_limits<double>::infinity();
        out.singular = true;
        out.diagnostic = "sample covariance is not positive definite";
        return out;
    }
    const Eigen::MatrixXd l = llt.matrixL();
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        if (!(l(i, i) > 0.0)) {
            out.value = -std::numeric_limits<double>::infinity();
            out.singular = true;
            out.diagnostic = "zero pivot in Cholesky factor";
            return out;
        }
        out.value += 2.0 * std::log(l(i, i));
    }
    return out;
}

double moment_match_kl(const Vectors& samples) {
    const Moments m = moments(samples, "moment_match_kl");
    const LogDet ld = log_det_cov(samples);
    if (ld.singular) throw std::domain_error("moment_match_kl: singular covariance (" + ld.diagnostic + ")");
    const double d = static_cast<double>(m.mean.size());
    return 0.5 * (m.cov.trace() + m.mean.squaredNorm() - d - ld.value);
}

double mean_norm_sq(const Vectors& samples) {
    const std::size_t d = check_dims(samples, "mean_norm_sq");
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& s : samples) mean += s[j];
        mean /= static_cast<double>(samples.size());
        total += mean * mean;
    }
    return total;
}

double bleu_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
              std::size_t n) {
    check_order(n);
    if (candidates.size() != references.size()) {
        throw std::invalid_argument("bleu_n: " + std::to_string(candidates.size()) + " candidates for " +
                                    std::to_string(references.size()) + " references");
    }
    std::vector<std::size_t> matches(n, 0), totals(n, 0);
    double cand_len = 0.0, ref_len = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_len += static_cast<double>(candidates[i].size());
        ref_len += static_cast<double>(references[i].size());
        for (std::size_t k = 1; k <= n; ++k) {
            const auto cand = ngram_counts(candidates[i], k);
            const auto ref = ngram_counts(references[i], k);
            totals[k - 1] += ngram_total(candidates[i], k);
            for (const auto& [g, c] : cand) {
                auto it = ref.find(g);
                if (it != ref.end()) matches[k - 1] += std::min(c, it->second);
            }
        }
    }
    return combine_bleu(matches, totals, cand_len, ref_len);
}

double sentence_bleu(const TokenSeq& candidate, const std::vector<const TokenSeq*>& references,
                     std::size_t n) {
    check_order(n);
    if (references.empty()) throw std::invalid_argument("sentence_bleu: no references");
    std::vector<std::size_t> matches(n, 0), totals(n, 0);
    for (std::size_t k = 1; k <= n; ++k) {
        const auto cand = ngram_counts(candidate, k);
        totals[k - 1] = ngram_total(candidate, k);
        NgramCounts max_ref;
        for (const auto* r : references) {
            for (const auto& [g, c] : ngram_counts(*r, k)) {
                auto& m = max_ref[g];
                m = std::max(m, c);
            }
        }
        for (const auto& [g, c] : cand) {
            auto it = max_ref.find(g);
            if (it != max_ref.end()) matches[k - 1] += std::min(c, it->second);
        }
    }
    return combine_bleu(matches, totals, static_cast<double>(candidate.size()),
                        static_cast<double>(closest_length(candidate.size(), references)));
}

double rouge_n(const std::vector<TokenSeq>& candidates, const std::vector<TokenSeq>& references,
               std::size_t n) {
    check_order(n);
    if (candidates.size() != references.size()) {
        throw std::invalid_argument("rouge_n: candidate and reference counts differ");
    }
    std::size_t overlap = 0, total = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const std::size_t ref_total = ngram_total(references[i], n);
        if (ref_total == 0) continue;
        total += ref_total;
        const auto cand = ngram_counts(candidates[i], n);
        for (const auto& [g, c] : ngram_counts(references[i], n)) {
            auto it = cand.find(g);
            if (it != cand.end()) overlap += std::min(c, it->second);
        }
    }
    if (total == 0) {
        throw std::invalid_argument("rouge_n: every reference is shorter than n = " + std::to_string(n));
    }
    return static_cast<double>(overlap) / static_cast<double>(total);
}

double self_bleu4(const std::vector<TokenSeq>& corpus, std::size_t sample_size) {
    constexpr std::size_t n = 4;
    if (corpus.size() < 2) throw std::invalid_argument("self_bleu4: need at least 2 sentences");

    // For every n-gram: the largest per-sentence count, how many sentences
    // attain it, and the runner-up count. This gives the max count over all
    // sentences except a given one without an O(N^2) scan.
    struct Top2 {
        std::size_t first = 0;
        std::size_t first_holders = 0;
        std::size_t second = 0;
    };
    std::vector<std::unordered_map<TokenSeq, Top2, SeqHash>> tops(n);
    for (const auto& s : corpus) {
        for (std::size_t k = 1; k <= n; ++k) {
            for (const auto& [g, c] : ngram_counts(s, k)) {
                auto& t = tops[k - 1][g];
                if (c > t.first) {
                    t.second = t.first;
                    t.first = c;
                    t.first_holders = 1;
                } else if (c == t.first) {
                    ++t.first_holders;
                } else if (c > t.second) {
                    t.second = c;
                }
            }
        }
    }
    std::vector<std::size_t> lengths;
    lengths.reserve(corpus.size());
    for (const auto& s : corpus) lengths.push_back(s.size());
    std::sort(lengths.begin(), lengths.end());

    auto closest_other = [&](std::size_t len) {
        const auto lo = std::lower_bound(lengths.begin(), lengths.end(), len);
        const auto hi = std::upper_bound(lengths.begin(), lengths.end(), len);
        if (hi - lo >= 2) return len;
        // the single copy of len belongs to the hypothesis itself
        const bool has_below = lo != lengths.begin();
        const bool has_above = hi != lengths.end();
        if (has_below && has_above) {
            const std::size_t below = *(lo - 1), above = *hi;
            return (len - below) <= (above - len) ? below : above;
        }
        return has_below ? *(lo - 1) : *hi;
    };

    const std::size_t hyps = std::min(sample_size, corpus.size());
    double total = 0.0;
    for (std::size_t i = 0; i < hyps; ++i) {
        const auto& cand = corpus[i];
        std::vector<std::size_t> matches(n, 0), totals(n, 0);
        for (std::size_t k = 1; k <= n; ++k) {
            totals[k - 1] = ngram_total(cand, k);
            for (const auto& [g, c] : ngram_counts(cand, k)) {
                const auto& t = tops[k - 1].at(g);
                const std::size_t others = (c == t.first && t.first_holders == 1) ? t.second : t.first;
                matches[k - 1] += std::min(c, others);
            }
        }
        total += combine_bleu(matches, totals, static_cast<double>(cand.size()),
                              static_cast<double>(closest_other(cand.size())));
    }
    return total / static_cast<double>(hyps);
}

std::vector<TokenSeq> content_sequences(const Corpus& corpus) {
    std::vector<TokenSeq> out;
    out.reserve(corpus.size());
    for (const auto& s : corpus.sentences) out.push_back(content_tokens(s));
    return out;
}

std::string metrics_csv_header() {
    std::ostringstream os;
    os << "# vaelab-metrics v1\n";
    os << "corpus,C,D,R,log_det_cov,mean_norm_sq,moment_match_kl,AU";
    for (const auto* b : {"b1", "b2", "b3", "all"}) {
        os << ',' << b << "_n," << b << "_bleu2," << b << "_bleu4," << b << "_rouge2," << b << "_rouge4";
    }
    os << ",unk_percent,mean_len,self_bleu4\n";
    return os.str();
}

std::string metrics_csv_row(const std::string& corpus_name, const MetricsReport& r) {
    std::ostringstream os;
    os << corpus_name << ',' << fmt(r.c_target) << ',' << fmt(r.distortion) << ',' << fmt(r.rate) << ','
       << fmt(r.log_det_cov) << ',' << fmt(r.mean_norm_sq) << ',' << fmt(r.moment_match_kl) << ','
       << r.active_units;
    for (const auto& b : standard_buckets()) {
        auto it = std::find_if(r.buckets.begin(), r.buckets.end(),
                               [&](const BucketScores& s) { return s.bucket == b.label; });
        if (it == r.buckets.end()) {
            os << ",0,,,,";
        } else {
            os << ',' << it->sentences << ',' << fmt(it->bleu2) << ',' << fmt(it->bleu4) << ','
               << fmt(it->rouge2) << ',' << fmt(it->rouge4);
        }
    }
    os << ',' << fmt(r.unk_percent) << ',' << fmt(r.mean_len) << ',' << fmt(r.self_bleu4) << '\n';
    return os.str();
}

}  // namespace vaelab
