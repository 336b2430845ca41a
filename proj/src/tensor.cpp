#include "smartedit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "smartedit/errors.hpp"

namespace smartedit {

namespace {

bool g_finite_checks = true;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_finite(const std::vector<double>& v, const char* op) {
    if (!g_finite_checks) return;
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw InvariantViolation(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

void require(bool cond, const char* op, const std::string& msg) {
    if (!cond) throw ShapeError(std::string(op) + ": " + msg);
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < m; ++p) {
        const double* arow = a + p * k;
        const double* brow = b + p * n;
        for (int64_t i = 0; i < k; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

namespace {
thread_local bool g_no_grad = false;
}

NoGradGuard::NoGradGuard() : prev_(g_no_grad) { g_no_grad = true; }
NoGradGuard::~NoGradGuard() { g_no_grad = prev_; }

namespace detail {
void Node::ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
}
}  // namespace detail

using detail::Node;

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw ShapeError("Tensor: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    check_finite(values, "leaf");
    node_ = std::make_shared<Node>();
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), value);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::randn(Rng& rng, Shape shape, double stddev, bool requires_grad) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (double& x : v) x = stddev * rng.normal();
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

int64_t Tensor::dim(int axis) const {
    if (axis < 0) axis += rank();
    return node_->shape.at(static_cast<size_t>(axis));
}

int64_t Tensor::size() const { return node_->numel(); }

const std::vector<double>& Tensor::values() const { return node_->value; }
std::vector<double>& Tensor::raw() { return node_->value; }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw InvariantViolation("grad: no gradient present");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

Tensor Tensor::detach(bool requires_grad) const {
    return Tensor(node_->shape, node_->value, requires_grad);
}

void Tensor::backward() const {
    if (!node_) throw InvariantViolation("backward: undefined tensor");
    if (node_->numel() != 1) throw InvariantViolation("backward: root must be scalar");
    if (!node_->requires_grad) throw InvariantViolation("backward: root does not require grad");

    // Post-order DFS gives a topological order (inputs precede consumers).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    visited.insert(node_.get());
    stack.emplace_back(node_.get(), 0);
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    node_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->backward_fn) continue;
        n->ensure_grad();
        for (auto& p : n->parents) {
            if (p->requires_grad) p->ensure_grad();
        }
        n->backward_fn(*n);
    }
}

Tensor make_op_tensor(Shape shape, std::vector<double> values, const char* op,
                      std::vector<Tensor> parents,
                      std::function<void(Node&)> backward_fn) {
    check_finite(values, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->op = op;
    bool needs = false;
    if (!g_no_grad)
        for (const auto& p : parents) needs = needs || p.node()->requires_grad;
    if (needs) {
        node->requires_grad = true;
        node->parents.reserve(parents.size());
        for (auto& p : parents) node->parents.push_back(p.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// element-wise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "add",
            "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    Node* an = a.node();
    Node* bn = b.node();
    return make_op_tensor(a.shape(), std::move(out), "add", {a, b}, [an, bn](Node& n) {
        if (an->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "sub",
            "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    Node* an = a.node();
    Node* bn = b.node();
    return make_op_tensor(a.shape(), std::move(out), "sub", {a, b}, [an, bn](Node& n) {
        if (an->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mul",
            "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    Node* an = a.node();
    Node* bn = b.node();
    return make_op_tensor(a.shape(), std::move(out), "mul", {a, b}, [an, bn](Node& n) {
        if (an->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
    });
}

Tensor scale(const Tensor& a, double c) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * c;
    Node* an = a.node();
    return make_op_tensor(a.shape(), std::move(out), "scale", {a}, [an, c](Node& n) {
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c;
    Node* an = a.node();
    return make_op_tensor(a.shape(), std::move(out), "add_scalar", {a}, [an](Node& n) {
        for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    });
}

Tensor relu(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    Node* an = a.node();
    return make_op_tensor(a.shape(), std::move(out), "relu", {a}, [an](Node& n) {
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (an->value[i] > 0.0) an->grad[i] += n.grad[i];
    });
}

Tensor gelu(const Tensor& a) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (size_t i = 0; i < av.size(); ++i) {
        out[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * kInvSqrt2));
    }
    Node* an = a.node();
    return make_op_tensor(a.shape(), std::move(out), "gelu", {a}, [an](Node& n) {
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const double x = an->value[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            an->grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul", "operands must be 2-D");
    const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    require(b.dim(0) == k, "matmul",
            "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m * n), 0.0);
    mm_nn_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    Node* an = a.node();
    Node* bn = b.node();
    return make_op_tensor({m, n}, std::move(out), "matmul", {a, b}, [an, bn, m, k, n](Node& nd) {
        if (an->requires_grad) mm_nt_acc(nd.grad.data(), bn->value.data(), an->grad.data(), m, n, k);
        if (bn->requires_grad) mm_tn_acc(an->value.data(), nd.grad.data(), bn->grad.data(), m, k, n);
    });
}

Tensor transpose(const Tensor& a) {
    require(a.rank() == 2, "transpose", "operand must be 2-D");
    const int64_t m = a.dim(0), n = a.dim(1);
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    Node* an = a.node();
    return make_op_tensor({n, m}, std::move(out), "transpose", {a}, [an, m, n](Node& nd) {
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) an->grad[i * n + j] += nd.grad[j * m + i];
    });
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
    require(x.rank() == 2 && bias.rank() == 1, "add_rowwise", "expects [n,d] and [d]");
    const int64_t n = x.dim(0), d = x.dim(1);
    require(bias.dim(0) == d, "add_rowwise", "bias length mismatch");
    const auto& xv = x.values();
    const auto& bv = bias.values();
    std::vector<double> out(xv.size());
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) out[i * d + j] = xv[i * d + j] + bv[j];
    Node* xn = x.node();
    Node* bn = bias.node();
    return make_op_tensor(x.shape(), std::move(out), "add_rowwise", {x, bias},
                          [xn, bn, n, d](Node& nd) {
                              if (xn->requires_grad)
                                  for (size_t i = 0; i < nd.grad.size(); ++i) xn->grad[i] += nd.grad[i];
                              if (bn->requires_grad)
                                  for (int64_t i = 0; i < n; ++i)
                                      for (int64_t j = 0; j < d; ++j) bn->grad[j] += nd.grad[i * d + j];
                          });
}

Tensor add_channelwise(const Tensor& x, const Tensor& bias) {
    require(x.rank() == 3 && bias.rank() == 1, "add_channelwise", "expects [c,h,w] and [c]");
    const int64_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
    require(bias.dim(0) == c, "add_channelwise", "bias length mismatch");
    const auto& xv = x.values();
    const auto& bv = bias.values();
    std::vector<double> out(xv.size());
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t i = 0; i < hw; ++i) out[ch * hw + i] = xv[ch * hw + i] + bv[ch];
    Node* xn = x.node();
    Node* bn = bias.node();
    return make_op_tensor(x.shape(), std::move(out), "add_channelwise", {x, bias},
                          [xn, bn, c, hw](Node& nd) {
                              if (xn->requires_grad)
                                  for (size_t i = 0; i < nd.grad.size(); ++i) xn->grad[i] += nd.grad[i];
                              if (bn->requires_grad)
                                  for (int64_t ch = 0; ch < c; ++ch)
                                      for (int64_t i = 0; i < hw; ++i) bn->grad[ch] += nd.grad[ch * hw + i];
                          });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    require(shape_numel(shape) == x.size(), "reshape",
            "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    Node* xn = x.node();
    std::vector<double> out = x.values();
    return make_op_tensor(std::move(shape), std::move(out), "reshape", {x}, [xn](Node& nd) {
        for (size_t i = 0; i < nd.grad.size(); ++i) xn->grad[i] += nd.grad[i];
    });
}

Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1) {
    require(x.rank() == 2, "slice_rows", "operand must be 2-D");
    const int64_t n = x.dim(0), d = x.dim(1);
    require(0 <= r0 && r0 < r1 && r1 <= n, "slice_rows", "row range out of bounds");
    const auto& xv = x.values();
    std::vector<double> out(xv.begin() + r0 * d, xv.begin() + r1 * d);
    Node* xn = x.node();
    return make_op_tensor({r1 - r0, d}, std::move(out), "slice_rows", {x}, [xn, r0, d](Node& nd) {
        const size_t off = static_cast<size_t>(r0 * d);
        for (size_t i = 0; i < nd.grad.size(); ++i) xn->grad[off + i] += nd.grad[i];
    });
}

Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1) {
    require(x.rank() == 2, "slice_cols", "operand must be 2-D");
    const int64_t n = x.dim(0), d = x.dim(1);
    require(0 <= c0 && c0 < c1 && c1 <= d, "slice_cols", "column range out of bounds");
    const int64_t w = c1 - c0;
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(n * w));
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < w; ++j) out[i * w + j] = xv[i * d + c0 + j];
    Node* xn = x.node();
    return make_op_tensor({n, w}, std::move(out), "slice_cols", {x}, [xn, n, d, c0, w](Node& nd) {
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < w; ++j) xn->grad[i * d + c0 + j] += nd.grad[i * w + j];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_rows", "no operands");
    const int64_t d = parts[0].dim(1);
    int64_t n = 0;
    for (const auto& p : parts) {
        require(p.rank() == 2 && p.dim(1) == d, "concat_rows", "column counts differ");
        n += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(n * d));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    std::vector<Node*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_op_tensor({n, d}, std::move(out), "concat_rows", parts,
                          [nodes = std::move(nodes)](Node& nd) {
                              size_t off = 0;
                              for (Node* pn : nodes) {
                                  const size_t len = pn->value.size();
                                  if (pn->requires_grad)
                                      for (size_t i = 0; i < len; ++i) pn->grad[i] += nd.grad[off + i];
                                  off += len;
                              }
                          });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_cols", "no operands");
    const int64_t n = parts[0].dim(0);
    int64_t d = 0;
    for (const auto& p : parts) {
        require(p.rank() == 2 && p.dim(0) == n, "concat_cols", "row counts differ");
        d += p.dim(1);
    }
    std::vector<double> out(static_cast<size_t>(n * d));
    int64_t col = 0;
    for (const auto& p : parts) {
        const int64_t w = p.dim(1);
        const auto& pv = p.values();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < w; ++j) out[i * d + col + j] = pv[i * w + j];
        col += w;
    }
    std::vector<std::pair<Node*, int64_t>> offsets;
    col = 0;
    for (const auto& p : parts) {
        offsets.emplace_back(p.node(), col);
        col += p.dim(1);
    }
    return make_op_tensor({n, d}, std::move(out), "concat_cols", parts,
                          [offsets = std::move(offsets), n, d](Node& nd) {
                              for (auto& [pn, c0] : offsets) {
                                  if (!pn->requires_grad) continue;
                                  const int64_t w = pn->shape[1];
                                  for (int64_t i = 0; i < n; ++i)
                                      for (int64_t j = 0; j < w; ++j)
                                          pn->grad[i * w + j] += nd.grad[i * d + c0 + j];
                              }
                          });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_channels", "no operands");
    require(parts[0].rank() == 3, "concat_channels", "operands must be [c,h,w]");
    const int64_t h = parts[0].dim(1), w = parts[0].dim(2);
    int64_t c = 0;
    for (const auto& p : parts) {
        require(p.rank() == 3 && p.dim(1) == h && p.dim(2) == w, "concat_channels",
                "spatial dims differ");
        c += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(c * h * w));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    std::vector<Node*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return make_op_tensor({c, h, w}, std::move(out), "concat_channels", parts,
                          [nodes = std::move(nodes)](Node& nd) {
                              size_t off = 0;
                              for (Node* pn : nodes) {
                                  const size_t len = pn->value.size();
                                  if (pn->requires_grad)
                                      for (size_t i = 0; i < len; ++i) pn->grad[i] += nd.grad[off + i];
                                  off += len;
                              }
                          });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    require(table.rank() == 2, "gather_rows", "table must be 2-D");
    const int64_t v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        require(0 <= id && id < v, "gather_rows", "row id " + std::to_string(id) + " out of range");
    const auto& tv = table.values();
    std::vector<double> out(ids.size() * static_cast<size_t>(d));
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + i * d, tv.data() + static_cast<size_t>(ids[i]) * d,
                    sizeof(double) * static_cast<size_t>(d));
    Node* tn = table.node();
    return make_op_tensor({static_cast<int64_t>(ids.size()), d}, std::move(out), "gather_rows",
                          {table}, [tn, ids, d](Node& nd) {
                              for (size_t i = 0; i < ids.size(); ++i) {
                                  double* dst = tn->grad.data() + static_cast<size_t>(ids[i]) * d;
                                  const double* src = nd.grad.data() + i * d;
                                  for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
                              }
                          });
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

Tensor softmax(const Tensor& x) {
    require(x.rank() >= 1, "softmax", "operand must have rank >= 1");
    const int64_t d = x.dim(-1);
    const int64_t rows = x.size() / d;
    const auto& xv = x.values();
    std::vector<double> out(xv.size());
    for (int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double* o = out.data() + r * d;
        double mx = in[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        double z = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        const double inv = 1.0 / z;
        for (int64_t j = 0; j < d; ++j) o[j] *= inv;
    }
    Node* xn = x.node();
    return make_op_tensor(x.shape(), std::move(out), "softmax", {x}, [xn, rows, d](Node& nd) {
        for (int64_t r = 0; r < rows; ++r) {
            const double* s = nd.value.data() + r * d;
            const double* dy = nd.grad.data() + r * d;
            double* dx = xn->grad.data() + r * d;
            double dot = 0.0;
            for (int64_t j = 0; j < d; ++j) dot += dy[j] * s[j];
            for (int64_t j = 0; j < d; ++j) dx[j] += s[j] * (dy[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require(x.rank() >= 1, "layer_norm", "operand must have rank >= 1");
    const int64_t d = x.dim(-1);
    require(gain.rank() == 1 && gain.dim(0) == d, "layer_norm", "gain length mismatch");
    require(bias.rank() == 1 && bias.dim(0) == d, "layer_norm", "bias length mismatch");
    const int64_t rows = x.size() / d;
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    std::vector<double> out(xv.size());
    std::vector<double> xhat(xv.size());
    std::vector<double> inv_std(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double mu = 0.0;
        for (int64_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = in[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<size_t>(r)] = is;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (in[j] - mu) * is;
            xhat[r * d + j] = xh;
            out[r * d + j] = gv[j] * xh + bv[j];
        }
    }
    Node* xn = x.node();
    Node* gn = gain.node();
    Node* bn = bias.node();
    return make_op_tensor(
        x.shape(), std::move(out), "layer_norm", {x, gain, bias},
        [xn, gn, bn, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
            for (int64_t r = 0; r < rows; ++r) {
                const double* dy = nd.grad.data() + r * d;
                const double* xh = xhat.data() + r * d;
                const double is = inv_std[static_cast<size_t>(r)];
                if (gn->requires_grad)
                    for (int64_t j = 0; j < d; ++j) gn->grad[j] += dy[j] * xh[j];
                if (bn->requires_grad)
                    for (int64_t j = 0; j < d; ++j) bn->grad[j] += dy[j];
                if (xn->requires_grad) {
                    double m1 = 0.0, m2 = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        const double t = dy[j] * gn->value[j];
                        m1 += t;
                        m2 += t * xh[j];
                    }
                    m1 /= static_cast<double>(d);
                    m2 /= static_cast<double>(d);
                    double* dx = xn->grad.data() + r * d;
                    for (int64_t j = 0; j < d; ++j) {
                        const double t = dy[j] * gn->value[j];
                        dx[j] += is * (t - m1 - xh[j] * m2);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// spatial ops
// ---------------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernels, int pad) {
    require(x.rank() == 3 && kernels.rank() == 4, "conv2d", "expects [c,h,w] and [co,ci,kh,kw]");
    const int64_t ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t co = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    require(kernels.dim(1) == ci, "conv2d",
            "kernel channel mismatch: input has " + std::to_string(ci) + ", kernels expect " +
                std::to_string(kernels.dim(1)));
    require(kh % 2 == 1 && kw % 2 == 1, "conv2d", "kernel dims must be odd");
    require(pad == kh / 2 && pad == kw / 2, "conv2d", "padding must preserve spatial dims");
    require(h >= 1 && w >= 1, "conv2d", "spatial dims must be >= 1");

    const auto& xv = x.values();
    const auto& kv = kernels.values();
    std::vector<double> out(static_cast<size_t>(co * h * w), 0.0);
    for (int64_t oc = 0; oc < co; ++oc) {
        for (int64_t icn = 0; icn < ci; ++icn) {
            const double* xch = xv.data() + icn * h * w;
            for (int64_t ky = 0; ky < kh; ++ky) {
                const int64_t y0 = std::max<int64_t>(0, pad - ky);
                const int64_t y1 = std::min<int64_t>(h, h + pad - ky);
                for (int64_t kx = 0; kx < kw; ++kx) {
                    const double wgt = kv[((oc * ci + icn) * kh + ky) * kw + kx];
                    if (wgt == 0.0) continue;
                    const int64_t x0 = std::max<int64_t>(0, pad - kx);
                    const int64_t x1 = std::min<int64_t>(w, w + pad - kx);
                    for (int64_t y = y0; y < y1; ++y) {
                        double* orow = out.data() + (oc * h + y) * w;
                        const double* irow = xch + (y + ky - pad) * w + (kx - pad);
                        for (int64_t xx = x0; xx < x1; ++xx) orow[xx] += wgt * irow[xx];
                    }
                }
            }
        }
    }
    Node* xn = x.node();
    Node* kn = kernels.node();
    return make_op_tensor(
        {co, h, w}, std::move(out), "conv2d", {x, kernels},
        [xn, kn, ci, h, w, co, kh, kw, pad](Node& nd) {
            for (int64_t oc = 0; oc < co; ++oc) {
                for (int64_t icn = 0; icn < ci; ++icn) {
                    const double* xch = xn->value.data() + icn * h * w;
                    double* dxch = xn->requires_grad ? xn->grad.data() + icn * h * w : nullptr;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t y0 = std::max<int64_t>(0, pad - ky);
                        const int64_t y1 = std::min<int64_t>(h, h + pad - ky);
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const size_t kidx = static_cast<size_t>(((oc * ci + icn) * kh + ky) * kw + kx);
                            const double wgt = kn->value[kidx];
                            const int64_t x0 = std::max<int64_t>(0, pad - kx);
                            const int64_t x1 = std::min<int64_t>(w, w + pad - kx);
                            double acc = 0.0;
                            for (int64_t y = y0; y < y1; ++y) {
                                const double* grow = nd.grad.data() + (oc * h + y) * w;
                                const int64_t ioff = (y + ky - pad) * w + (kx - pad);
                                const double* irow = xch + ioff;
                                if (kn->requires_grad)
                                    for (int64_t xx = x0; xx < x1; ++xx) acc += grow[xx] * irow[xx];
                                if (dxch) {
                                    double* dxrow = dxch + ioff;
                                    for (int64_t xx = x0; xx < x1; ++xx) dxrow[xx] += grow[xx] * wgt;
                                }
                            }
                            if (kn->requires_grad) kn->grad[kidx] += acc;
                        }
                    }
                }
            }
        });
}

Tensor avg_pool_2x2(const Tensor& x) {
    require(x.rank() == 3, "avg_pool_2x2", "operand must be [c,h,w]");
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    require(h % 2 == 0 && w % 2 == 0, "avg_pool_2x2", "spatial dims must be even");
    const int64_t oh = h / 2, ow = w / 2;
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(c * oh * ow));
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xx = 0; xx < ow; ++xx) {
                const double* base = xv.data() + (ch * h + 2 * y) * w + 2 * xx;
                out[(ch * oh + y) * ow + xx] = 0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
            }
    Node* xn = x.node();
    return make_op_tensor({c, oh, ow}, std::move(out), "avg_pool_2x2", {x},
                          [xn, c, h, w, oh, ow](Node& nd) {
                              for (int64_t ch = 0; ch < c; ++ch)
                                  for (int64_t y = 0; y < oh; ++y)
                                      for (int64_t xx = 0; xx < ow; ++xx) {
                                          const double g = 0.25 * nd.grad[(ch * oh + y) * ow + xx];
                                          double* base = xn->grad.data() + (ch * h + 2 * y) * w + 2 * xx;
                                          base[0] += g;
                                          base[1] += g;
                                          base[w] += g;
                                          base[w + 1] += g;
                                      }
                          });
}

Tensor upsample_nearest_2x(const Tensor& x) {
    require(x.rank() == 3, "upsample_nearest_2x", "operand must be [c,h,w]");
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t oh = h * 2, ow = w * 2;
    const auto& xv = x.values();
    std::vector<double> out(static_cast<size_t>(c * oh * ow));
    for (int64_t ch = 0; ch < c; ++ch)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t xx = 0; xx < ow; ++xx)
                out[(ch * oh + y) * ow + xx] = xv[(ch * h + y / 2) * w + xx / 2];
    Node* xn = x.node();
    return make_op_tensor({c, oh, ow}, std::move(out), "upsample_nearest_2x", {x},
                          [xn, c, h, w, oh, ow](Node& nd) {
                              for (int64_t ch = 0; ch < c; ++ch)
                                  for (int64_t y = 0; y < oh; ++y)
                                      for (int64_t xx = 0; xx < ow; ++xx)
                                          xn->grad[(ch * h + y / 2) * w + xx / 2] +=
                                              nd.grad[(ch * oh + y) * ow + xx];
                          });
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Node* xn = x.node();
    return make_op_tensor({1}, {acc}, "sum", {x}, [xn](Node& nd) {
        const double g = nd.grad[0];
        for (double& dg : xn->grad) dg += g;
    });
}

Tensor mean(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.size());
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Node* xn = x.node();
    return make_op_tensor({1}, {acc * inv}, "mean", {x}, [xn, inv](Node& nd) {
        const double g = nd.grad[0] * inv;
        for (double& dg : xn->grad) dg += g;
    });
}

Tensor mse(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(), "mse",
            "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.values();
    const auto& bv = b.values();
    const double inv = 1.0 / static_cast<double>(av.size());
    double acc = 0.0;
    for (size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    Node* an = a.node();
    Node* bn = b.node();
    return make_op_tensor({1}, {acc * inv}, "mse", {a, b}, [an, bn, inv](Node& nd) {
        const double g = 2.0 * inv * nd.grad[0];
        for (size_t i = 0; i < an->value.size(); ++i) {
            const double d = g * (an->value[i] - bn->value[i]);
            if (an->requires_grad) an->grad[i] += d;
            if (bn->requires_grad) bn->grad[i] -= d;
        }
    });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& ids) {
    require(logits.rank() == 2, "cross_entropy_rows", "logits must be 2-D");
    const int64_t n = logits.dim(0), v = logits.dim(1);
    require(static_cast<int64_t>(ids.size()) == n, "cross_entropy_rows", "one id per row required");
    for (int id : ids)
        require(0 <= id && id < v, "cross_entropy_rows", "class id out of range");
    const auto& lv = logits.values();
    double loss = 0.0;
    for (int64_t r = 0; r < n; ++r) {
        const double* row = lv.data() + r * v;
        double mx = row[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
        loss += mx + std::log(z) - row[ids[static_cast<size_t>(r)]];
    }
    Node* ln = logits.node();
    return make_op_tensor({1}, {loss}, "cross_entropy_rows", {logits}, [ln, ids, n, v](Node& nd) {
        const double g = nd.grad[0];
        for (int64_t r = 0; r < n; ++r) {
            const double* row = ln->value.data() + r * v;
            double* drow = ln->grad.data() + r * v;
            double mx = row[0];
            for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            double z = 0.0;
            for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
            const double inv = 1.0 / z;
            for (int64_t j = 0; j < v; ++j) drow[j] += g * std::exp(row[j] - mx) * inv;
            drow[ids[static_cast<size_t>(r)]] -= g;
        }
    });
}

}  // namespace smartedit
