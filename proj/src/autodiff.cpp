#include "vaelab/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace vaelab {

namespace {

thread_local bool g_grad_enabled = true;

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMajor>;
using ConstMapMat = Eigen::Map<const RowMajor>;

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) {
        return false;
    }
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a binary op under scalar / trailing-dimension broadcasting.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) {
        return a;
    }
    if (shape_size(b) == 1 && b.size() <= 1) {
        return a;
    }
    if (shape_size(a) == 1 && a.size() <= 1) {
        return b;
    }
    if (is_suffix(b, a)) {
        return a;
    }
    if (is_suffix(a, b)) {
        return b;
    }
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " +
                     shape_string(b) + " are not broadcast-compatible");
}

Node& node_of(const Tensor& t) {
    if (!t.defined()) {
        throw std::invalid_argument("operation on undefined tensor");
    }
    return *t.node();
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got shape " +
                         shape_string(t.shape()));
    }
}

template <class Forward, class Derivative>
Tensor unary(const Tensor& a, Forward f, Derivative df) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) {
        out[i] = f(av[i]);
    }
    auto pa = a.node_ptr();
    return make_op_result(a.shape(), std::move(out), {a}, [pa, df](const Node& self) {
        if (!pa->requires_grad) {
            return;
        }
        auto& g = Node::grad_of(*pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i] * df(pa->value[i], self.value[i]);
        }
    });
}

// Visits every output index with the matching operand indices. One operand
// has the full size n; the other's size divides it (trailing broadcast).
template <typename F>
inline void broadcast_loop(std::size_t n, std::size_t na, std::size_t nb, F&& f) {
    if (na == n && nb == n) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    } else if (na == n) {
        for (std::size_t base = 0; base < n; base += nb)
            for (std::size_t j = 0; j < nb; ++j) f(base + j, base + j, j);
    } else {
        for (std::size_t base = 0; base < n; base += na)
            for (std::size_t j = 0; j < na; ++j) f(base + j, j, base + j);
    }
}

Tensor binary(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    const char* name = op == ElementwiseOp::add ? "add" : op == ElementwiseOp::sub ? "sub" : "mul";
    Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    const std::size_t n = shape_size(out_shape);
    const auto& av = node_of(a).value;
    const auto& bv = node_of(b).value;
    const std::size_t na = av.size();
    const std::size_t nb = bv.size();
    std::vector<double> out(n);
    switch (op) {
        case ElementwiseOp::add:
            broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] + bv[ib]; });
            break;
        case ElementwiseOp::sub:
            broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] - bv[ib]; });
            break;
        case ElementwiseOp::mul:
            broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = av[ia] * bv[ib]; });
            break;
        default:
            throw std::logic_error("binary: not a binary op");
    }
    auto pa = a.node_ptr();
    auto pb = b.node_ptr();
    return make_op_result(std::move(out_shape), std::move(out), {a, b},
                          [pa, pb, op](const Node& self) {
        const std::size_t n = self.grad.size();
        const std::size_t na = pa->value.size();
        const std::size_t nb = pb->value.size();
        const auto& g = self.grad;
        const auto& av = pa->value;
        const auto& bv = pb->value;
        if (pa->requires_grad) {
            auto& ga = Node::grad_of(*pa);
            if (op == ElementwiseOp::mul) {
                broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { ga[ia] += g[i] * bv[ib]; });
            } else {
                broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
            }
        }
        if (pb->requires_grad) {
            auto& gb = Node::grad_of(*pb);
            if (op == ElementwiseOp::mul) {
                broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { gb[ib] += g[i] * av[ia]; });
            } else if (op == ElementwiseOp::sub) {
                broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] -= g[i]; });
            } else {
                broadcast_loop(n, na, nb, [&](std::size_t i, std::size_t, std::size_t ib) { gb[ib] += g[i]; });
            }
        }
    });
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::vector<double>& Node::grad_of(Node& n) {
    if (n.grad.size() != n.value.size()) {
        n.grad.assign(n.value.size(), 0.0);
    }
    return n.grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    if (shape_size(shape) != values.size()) {
        throw ShapeError("tensor of shape " + shape_string(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_size(shape);
    Tensor t = constant(std::move(shape), std::vector<double>(n, 0.0));
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    Tensor t = constant({}, {value});
    t.node_->requires_grad = requires_grad;
    return t;
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }
std::size_t Tensor::size() const { return node_of(*this).value.size(); }

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
    const auto& s = shape();
    return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::values() const { return node_of(*this).value; }

std::span<double> Tensor::mutable_values() {
    auto& n = node_of(*this);
    if (!n.leaf) {
        throw std::logic_error("values of an op result are immutable");
    }
    return n.value;
}

double Tensor::item() const {
    const auto& n = node_of(*this);
    if (n.value.size() != 1) {
        throw ShapeError("item() on tensor of shape " + shape_string(n.shape));
    }
    return n.value[0];
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }
bool Tensor::is_leaf() const { return node_of(*this).leaf; }
std::span<const double> Tensor::grad() const { return node_of(*this).grad; }
std::span<double> Tensor::mutable_grad() { return Node::grad_of(node_of(*this)); }

void Tensor::zero_grad() {
    auto& n = node_of(*this);
    std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(const Node&)> backward_rule) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->leaf = false;
    if (g_grad_enabled) {
        for (const auto& in : inputs) {
            if (in.defined() && in.node()->requires_grad) {
                node->requires_grad = true;
                break;
            }
        }
    }
    if (node->requires_grad) {
        node->parents.reserve(inputs.size());
        for (auto& in : inputs) {
            node->parents.push_back(in.node_ptr());
        }
        node->backward = std::move(backward_rule);
    }
    return Tensor(std::move(node));
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    switch (op) {
        case ElementwiseOp::add:
        case ElementwiseOp::sub:
        case ElementwiseOp::mul:
            if (!b.defined()) {
                throw std::invalid_argument("binary elementwise op needs two operands");
            }
            return binary(op, a, b);
        case ElementwiseOp::sigmoid:
            return sigmoid(a);
        case ElementwiseOp::tanh:
            return tanh(a);
        case ElementwiseOp::exp:
            return exp(a);
        case ElementwiseOp::log:
            return log(a);
    }
    throw std::logic_error("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(ElementwiseOp::mul, a, b); }

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) {
                return 1.0 / (1.0 + std::exp(-x));
            }
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
    return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor clamp_min(const Tensor& a, double floor) {
    return unary(
        a, [floor](double x) { return x > floor ? x : floor; },
        [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
    }
    std::vector<double> out(m * n);
    MapMat(out.data(), m, n).noalias() =
        ConstMapMat(a.values().data(), m, k) * ConstMapMat(b.values().data(), k, n);
    auto pa = a.node_ptr();
    auto pb = b.node_ptr();
    return make_op_result({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](const Node& self) {
        ConstMapMat g(self.grad.data(), m, n);
        if (pa->requires_grad) {
            MapMat(Node::grad_of(*pa).data(), m, k).noalias() +=
                g * ConstMapMat(pb->value.data(), k, n).transpose();
        }
        if (pb->requires_grad) {
            MapMat(Node::grad_of(*pb).data(), k, n).noalias() +=
                ConstMapMat(pa->value.data(), m, k).transpose() * g;
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) {
        total += v;
    }
    auto pa = a.node_ptr();
    return make_op_result({}, {total}, {a}, [pa](const Node& self) {
        auto& g = Node::grad_of(*pa);
        for (auto& gi : g) {
            gi += self.grad[0];
        }
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) {
        throw ShapeError("mean of an empty tensor");
    }
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
    require_rank2(a, "row_sum");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m, 0.0);
    const auto& av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i] += av[i * n + j];
        }
    }
    auto pa = a.node_ptr();
    return make_op_result({m}, std::move(out), {a}, [pa, m, n](const Node& self) {
        auto& g = Node::grad_of(*pa);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                g[i * n + j] += self.grad[i];
            }
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " +
                         shape_string(shape));
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    auto pa = a.node_ptr();
    return make_op_result(std::move(shape), std::move(out), {a}, [pa](const Node& self) {
        auto& g = Node::grad_of(*pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += self.grad[i];
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_rank2(a, "concat_cols");
    require_rank2(b, "concat_cols");
    const std::size_t m = a.shape()[0];
    if (b.shape()[0] != m) {
        throw ShapeError("concat_cols: row counts differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    const std::size_t p = a.shape()[1], q = b.shape()[1];
    std::vector<double> out(m * (p + q));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(av.begin() + i * p, p, out.begin() + i * (p + q));
        std::copy_n(bv.begin() + i * q, q, out.begin() + i * (p + q) + p);
    }
    auto pa = a.node_ptr();
    auto pb = b.node_ptr();
    return make_op_result({m, p + q}, std::move(out), {a, b}, [pa, pb, m, p, q](const Node& self) {
        if (pa->requires_grad) {
            auto& g = Node::grad_of(*pa);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < p; ++j) g[i * p + j] += self.grad[i * (p + q) + j];
        }
        if (pb->requires_grad) {
            auto& g = Node::grad_of(*pb);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < q; ++j) g[i * q + j] += self.grad[i * (p + q) + p + j];
        }
    });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require_rank2(a, "slice_cols");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (begin + count > n) {
        throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of range for " +
                         shape_string(a.shape()));
    }
    std::vector<double> out(m * count);
    const auto& av = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(av.begin() + i * n + begin, count, out.begin() + i * count);
    }
    auto pa = a.node_ptr();
    return make_op_result({m, count}, std::move(out), {a}, [pa, m, n, begin, count](const Node& self) {
        auto& g = Node::grad_of(*pa);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
    });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    require_rank2(table, "gather_rows");
    const std::size_t rows = table.shape()[0], d = table.shape()[1];
    std::vector<std::size_t> idx(ids.begin(), ids.end());
    std::vector<double> out(idx.size() * d);
    const auto& tv = table.values();
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= rows) {
            throw std::out_of_range("gather_rows: id " + std::to_string(idx[r]) +
                                    " out of range for table with " + std::to_string(rows) +
                                    " rows");
        }
        std::copy_n(tv.begin() + idx[r] * d, d, out.begin() + r * d);
    }
    auto pt = table.node_ptr();
    const std::size_t n = idx.size();
    return make_op_result({n, d}, std::move(out), {table},
                          [pt, idx = std::move(idx), d](const Node& self) {
        auto& g = Node::grad_of(*pt);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < d; ++j) g[idx[r] * d + j] += self.grad[r * d + j];
    });
}

Tensor select_rows(const std::vector<bool>& keep, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("select_rows: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
    const std::size_t m = a.rows();
    const std::size_t n = a.size() / std::max<std::size_t>(m, 1);
    if (keep.size() != m) {
        throw ShapeError("select_rows: mask has " + std::to_string(keep.size()) +
                         " entries for " + std::to_string(m) + " rows");
    }
    std::vector<double> out(a.size());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < m; ++i) {
        const auto& src = keep[i] ? av : bv;
        std::copy_n(src.begin() + i * n, n, out.begin() + i * n);
    }
    auto pa = a.node_ptr();
    auto pb = b.node_ptr();
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb, keep, m, n](const Node& self) {
        for (std::size_t i = 0; i < m; ++i) {
            auto& target = keep[i] ? pa : pb;
            if (!target->requires_grad) {
                continue;
            }
            auto& g = Node::grad_of(*target);
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j];
        }
    });
}

void backward(const Tensor& loss) {
    auto& root = node_of(loss);
    if (root.value.size() != 1) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_string(root.shape));
    }
    if (!root.requires_grad) {
        return;
    }
    if (root.leaf) {
        Node::grad_of(root)[0] += 1.0;
        return;
    }

    // Iterative post-order DFS; `order` ends up with parents before children.
    std::vector<Node*> order;
    std::vector<Node*> leaves;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{&root, 0}};
    visited.insert(&root);
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) {
                if (p->leaf) {
                    leaves.push_back(p);
                } else {
                    stack.emplace_back(p, 0);
                }
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        n->grad.assign(n->value.size(), 0.0);
    }
    // Leaves collect this pass into fresh buffers and only then add to what
    // they already hold, so repeated passes accumulate exactly.
    std::vector<std::vector<double>> held(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        held[i].swap(leaves[i]->grad);
    }
    root.grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) {
            (*it)->backward(**it);
        }
    }
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        auto& g = leaves[i]->grad;
        if (held[i].empty()) continue;
        if (g.empty()) {
            g.swap(held[i]);
            continue;
        }
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = held[i][j] + g[j];
    }
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                           double eps, double floor) {
    Tensor x = Tensor::parameter(point.shape(), {point.values().begin(), point.values().end()});
    Tensor y = f(x);
    if (y.size() != 1) {
        throw ShapeError("grad_check: function must be scalar-valued");
    }
    backward(y);
    std::vector<double> analytic(x.size(), 0.0);
    if (!x.grad().empty()) {
        std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    }

    GradCheckResult result;
    NoGradGuard no_grad;
    std::vector<double> probe(point.values().begin(), point.values().end());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + eps;
        const double up = f(Tensor::constant(point.shape(), probe)).item();
        probe[i] = saved - eps;
        const double down = f(Tensor::constant(point.shape(), probe)).item();
        probe[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        const double rel = std::abs(analytic[i] - numeric) / denom;
        if (i == 0 || rel > result.max_relative_error) {
            result.max_relative_error = rel;
            result.worst_index = i;
            result.analytic = analytic[i];
            result.numeric = numeric;
        }
    }
    return result;
}

}  // namespace vaelab
