#include "vaelab/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vaelab {

Tensor init_uniform(Shape shape, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor::parameter(std::move(shape), std::move(values));
}

Tensor init_normal(Shape shape, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
        v = dist(rng);
    }
    return Tensor::parameter(std::move(shape), std::move(values));
}

EmbeddingTable EmbeddingTable::create(std::size_t vocab_size, std::size_t dim, Rng& rng) {
    return {init_normal({vocab_size, dim}, 0.1, rng)};
}

Tensor embed(const EmbeddingTable& table, std::span<const TokenId> ids) {
    return gather_rows(table.weight, ids);
}

Linear Linear::create(std::size_t in, std::size_t out, Rng& rng) {
    return {init_uniform({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng),
            Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

const char* to_string(CellKind kind) { return kind == CellKind::gru ? "gru" : "lstm"; }

CellKind cell_kind_from_string(const std::string& name) {
    if (name == "gru" || name == "GRU") return CellKind::gru;
    if (name == "lstm" || name == "LSTM") return CellKind::lstm;
    throw std::invalid_argument("unknown cell kind '" + name + "' (expected gru or lstm)");
}

RecurrentCellParams RecurrentCellParams::create(CellKind kind, std::size_t input_dim,
                                                std::size_t hidden, Rng& rng) {
    RecurrentCellParams p;
    p.kind = kind;
    p.input_dim = input_dim;
    p.hidden = hidden;
    const std::size_t width = p.gates() * hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    p.w_input = init_uniform({input_dim, width}, bound, rng);
    p.w_hidden = init_uniform({hidden, width}, bound, rng);
    p.bias = Tensor::zeros({width}, true);
    return p;
}

std::size_t RecurrentCellParams::parameter_count() const {
    return gates() * (input_dim * hidden + hidden * hidden + hidden);
}

CellState zero_state(const RecurrentCellParams& params, std::size_t batch) {
    CellState s;
    s.kind = params.kind;
    s.h = Tensor::zeros({batch, params.hidden});
    if (params.kind == CellKind::lstm) {
        s.c = Tensor::zeros({batch, params.hidden});
    }
    return s;
}

CellState recurrent_step(const RecurrentCellParams& params, const Tensor& input,
                         const CellState& state) {
    if (state.kind != params.kind) {
        throw std::invalid_argument(std::string("recurrent_step: ") + to_string(state.kind) +
                                    " state passed to " + to_string(params.kind) + " cell");
    }
    if (params.kind == CellKind::lstm && !state.c.defined()) {
        throw std::invalid_argument("recurrent_step: LSTM state is missing its cell vector");
    }
    Tensor x = input.rank() == 1 ? reshape(input, {1, input.size()}) : input;
    if (x.cols() != params.input_dim) {
        throw ShapeError("recurrent_step: input " + shape_string(input.shape()) +
                         " does not match cell input dimension " + std::to_string(params.input_dim));
    }
    const std::size_t h = params.hidden;
    Tensor gx = add(matmul(x, params.w_input), params.bias);
    Tensor gh = matmul(state.h, params.w_hidden);

    CellState next;
    next.kind = params.kind;
    if (params.kind == CellKind::gru) {
        Tensor r = sigmoid(add(slice_cols(gx, 0, h), slice_cols(gh, 0, h)));
        Tensor u = sigmoid(add(slice_cols(gx, h, h), slice_cols(gh, h, h)));
        Tensor n = tanh(add(slice_cols(gx, 2 * h, h), mul(r, slice_cols(gh, 2 * h, h))));
        // (1 - u) * n + u * h  ==  n + u * (h - n)
        next.h = add(n, mul(u, sub(state.h, n)));
    } else {
        Tensor g = add(gx, gh);
        Tensor i = sigmoid(slice_cols(g, 0, h));
        Tensor f = sigmoid(slice_cols(g, h, h));
        Tensor cand = tanh(slice_cols(g, 2 * h, h));
        Tensor o = sigmoid(slice_cols(g, 3 * h, h));
        next.c = add(mul(f, state.c), mul(i, cand));
        next.h = mul(o, tanh(next.c));
    }
    return next;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.size());
    if (logits.empty()) {
        return out;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (auto& p : out) {
        p /= z;
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             std::span<const double> weights) {
    if (logits.rank() != 1 && logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: logits must be [V] or [B, V], got " +
                         shape_string(logits.shape()));
    }
    const bool vector_input = logits.rank() == 1;
    const std::size_t rows = logits.rows();
    const std::size_t vocab = logits.cols();
    if (targets.size() != rows) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
    }
    if (!weights.empty() && weights.size() != rows) {
        throw ShapeError("softmax_cross_entropy: weight count does not match rows");
    }
    std::vector<double> w(rows, 1.0);
    if (!weights.empty()) {
        std::copy(weights.begin(), weights.end(), w.begin());
    }
    std::vector<TokenId> tgt(targets.begin(), targets.end());
    for (std::size_t r = 0; r < rows; ++r) {
        if (w[r] != 0.0 && tgt[r] >= vocab) {
            throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(tgt[r]) +
                                    " out of range for vocabulary of " + std::to_string(vocab));
        }
    }

    const auto lv = logits.values();
    // probabilities are kept for the backward pass
    std::vector<double> probs(rows * vocab, 0.0);
    std::vector<double> loss(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        if (w[r] == 0.0) {
            continue;
        }
        const double* row = lv.data() + r * vocab;
        const double mx = *std::max_element(row, row + vocab);
        double z = 0.0;
        for (std::size_t j = 0; j < vocab; ++j) {
            const double e = std::exp(row[j] - mx);
            probs[r * vocab + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < vocab; ++j) {
            probs[r * vocab + j] /= z;
        }
        loss[r] = w[r] * (std::log(z) - (row[tgt[r]] - mx));
    }

    Shape out_shape = vector_input ? Shape{} : Shape{rows};
    auto pl = logits.node_ptr();
    return make_op_result(std::move(out_shape), std::move(loss), {logits},
                          [pl, probs = std::move(probs), tgt = std::move(tgt), w = std::move(w),
                           rows, vocab](const Node& self) {
        auto& g = Node::grad_of(*pl);
        for (std::size_t r = 0; r < rows; ++r) {
            if (w[r] == 0.0) {
                continue;
            }
            const double scale = self.grad[r] * w[r];
            for (std::size_t j = 0; j < vocab; ++j) {
                g[r * vocab + j] += scale * probs[r * vocab + j];
            }
            g[r * vocab + tgt[r]] -= scale;
        }
    });
}

Tensor softmax_cross_entropy(const Tensor& logits, TokenId target) {
    const TokenId targets[1] = {target};
    return softmax_cross_entropy(logits, targets);
}

void adam_update(AdamState& state, std::span<Tensor> params,
                 std::span<const std::vector<double>> grads) {
    if (grads.size() != params.size()) {
        throw ShapeError("adam_update: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw ShapeError("adam_update: optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].size() ||
            (!grads[i].empty() && grads[i].size() != params[i].size())) {
            throw ShapeError("adam_update: shape mismatch for parameter " + std::to_string(i) +
                             " of shape " + shape_string(params[i].shape()));
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto values = params[i].mutable_values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto& g = grads[i];
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            values[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

void adam_update(AdamState& state, std::span<Tensor> params) {
    std::vector<std::vector<double>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        grads.emplace_back(p.grad().begin(), p.grad().end());
    }
    adam_update(state, params, grads);
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p.grad()) {
            sq += g * g;
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double factor = max_norm / norm;
        for (auto& p : params) {
            for (auto& g : p.mutable_grad()) {
                g *= factor;
            }
        }
    }
    return norm;
}

std::vector<Tensor> tensors_of(const ParameterList& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) {
        out.push_back(p.tensor);
    }
    return out;
}

}  // namespace vaelab
