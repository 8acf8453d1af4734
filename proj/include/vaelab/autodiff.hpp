#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// Every Tensor is a handle to a node holding row-major float64 values. Ops on
// tensors that require gradients record their parents and a local backward
// rule; backward() replays the recorded graph in reverse topological order.
// Broadcasting is limited to scalars and trailing-dimension suffixes
// (e.g. a bias [n] onto a matrix [m, n]).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vaelab {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Node;

class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor parameter(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t rows() const;  // leading dimension for rank 2, 1 for rank <= 1
    std::size_t cols() const;  // trailing dimension, 1 for scalars

    std::span<const double> values() const;
    // Mutation is for leaves only (optimizer steps, checkpoint loading).
    std::span<double> mutable_values();
    double item() const;

    bool requires_grad() const;
    bool is_leaf() const;
    // Empty span when no gradient has been accumulated yet.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;

    friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                                 std::function<void(const Node&)>);
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents' grads.
    std::function<void(const Node&)> backward;

    // Returns the parent's grad buffer, allocating zeros on first use.
    static std::vector<double>& grad_of(Node& n);
};

// Builds an op output. Records parents and the backward rule only when some
// input requires a gradient and gradient recording is enabled.
Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(const Node&)> backward);

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

enum class ElementwiseOp { add, sub, mul, sigmoid, tanh, exp, log };

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
// Elementwise max(a, floor); gradient flows only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [m, n] -> [m]
Tensor row_sum(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
// [m, p] ++ [m, q] -> [m, p + q]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
// table [V, d], ids -> [ids.size(), d]
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);
// Row i of the result is a's row i when keep[i], else b's row i.
Tensor select_rows(const std::vector<bool>& keep, const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
// gradient. Interior gradients are recomputed from scratch on every call, so
// two calls on the same loss leave leaves with exactly twice the gradient.
void backward(const Tensor& loss);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Compares backward() against central differences (f(x+eps) - f(x-eps)) / 2eps
// for every component of `point`. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double eps = 1e-6, double floor = 1e-6);

}  // namespace vaelab
