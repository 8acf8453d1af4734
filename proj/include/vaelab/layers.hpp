#pragma once

#include "vaelab/autodiff.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vaelab {

using TokenId = std::size_t;
using Rng = std::mt19937_64;

struct NamedParameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

// Weight initializers. Recurrent and linear weights ~ U(-1/sqrt(h), 1/sqrt(h)),
// embeddings ~ N(0, 0.1^2), biases zero.
Tensor init_uniform(Shape shape, double bound, Rng& rng);
Tensor init_normal(Shape shape, double stddev, Rng& rng);

struct EmbeddingTable {
    Tensor weight;  // [vocab, dim]

    static EmbeddingTable create(std::size_t vocab_size, std::size_t dim, Rng& rng);
    std::size_t vocab_size() const { return weight.shape()[0]; }
    std::size_t dim() const { return weight.shape()[1]; }
};

// Row-gather; out-of-range ids throw std::out_of_range.
Tensor embed(const EmbeddingTable& table, std::span<const TokenId> ids);

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear create(std::size_t in, std::size_t out, Rng& rng);
    Tensor operator()(const Tensor& x) const;
};

enum class CellKind { gru, lstm };

const char* to_string(CellKind kind);
CellKind cell_kind_from_string(const std::string& name);

// Fused gate layout: columns [r | u | n] for GRU, [i | f | g | o] for LSTM.
struct RecurrentCellParams {
    CellKind kind = CellKind::gru;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    Tensor w_input;   // [input_dim, gates * hidden]
    Tensor w_hidden;  // [hidden, gates * hidden]
    Tensor bias;      // [gates * hidden]

    static RecurrentCellParams create(CellKind kind, std::size_t input_dim, std::size_t hidden,
                                      Rng& rng);
    std::size_t gates() const { return kind == CellKind::gru ? 3 : 4; }
    std::size_t parameter_count() const;
};

struct CellState {
    CellKind kind = CellKind::gru;
    Tensor h;  // [batch, hidden]
    Tensor c;  // LSTM only
};

CellState zero_state(const RecurrentCellParams& params, std::size_t batch);

// One GRU/LSTM update. `input` is [batch, input_dim] or [input_dim].
//   GRU:  r = s(x Wr + h Ur + br), u = s(x Wu + h Uu + bu),
//         n = tanh(x Wn + bn + r * (h Un)), h' = (1 - u) * n + u * h
//   LSTM: i, f, o = s(.), g = tanh(.), c' = f * c + i * g, h' = o * tanh(c')
CellState recurrent_step(const RecurrentCellParams& params, const Tensor& input,
                         const CellState& state);

// Per-row -log softmax(logits)[target] in nats, max-subtracted.
// logits [V] -> scalar; logits [B, V] -> [B]. Rows with weight 0 contribute 0
// and receive no gradient; `weights` may be empty (all ones).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             std::span<const double> weights = {});
Tensor softmax_cross_entropy(const Tensor& logits, TokenId target);

// Row-wise softmax of raw values, no tape.
std::vector<double> softmax(std::span<const double> logits);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    explicit AdamState(double learning_rate = 1e-3) : lr(learning_rate) {}
};

// Bias-corrected Adam step using each parameter's accumulated gradient.
// Parameters without a gradient are treated as having a zero gradient.
void adam_update(AdamState& state, std::span<Tensor> params);
void adam_update(AdamState& state, std::span<Tensor> params,
                 std::span<const std::vector<double>> grads);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

std::vector<Tensor> tensors_of(const ParameterList& params);

}  // namespace vaelab
