#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "smartedit/rng.hpp"

namespace smartedit {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense 64-bit float tensor with reverse-mode autodiff.
///
/// A Tensor is a cheap shared handle to a graph node. Ops build a fresh tape
/// per forward pass; calling backward() on a scalar walks the tape once in
/// reverse topological order and accumulates gradients additively into every
/// leaf that has requires_grad set. Values are immutable once produced by an
/// op; raw() exists for leaf initialization and optimizer updates between
/// passes.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(Rng& rng, Shape shape, double stddev = 1.0, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    int64_t dim(int axis) const;
    int64_t size() const;

    const std::vector<double>& values() const;
    /// Mutable storage for leaf init / optimizer steps. Never call on a
    /// tensor that is part of a live graph about to be differentiated.
    std::vector<double>& raw();

    double item() const;  // scalar tensors only

    bool requires_grad() const;
    void set_requires_grad(bool v);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    /// Reverse-mode sweep from a scalar root.
    void backward() const;

    /// Copy of the values as a fresh leaf, detached from any graph.
    Tensor detach(bool requires_grad = false) const;

    detail::Node* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op_tensor(Shape shape, std::vector<double> values, const char* op,
                                 std::vector<Tensor> parents,
                                 std::function<void(detail::Node&)> backward_fn);
};

namespace detail {
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    const char* op = "leaf";

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad();
};
}  // namespace detail

/// When enabled (default), every op verifies its outputs are finite and
/// throws InvariantViolation otherwise.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

/// While alive, ops do not record the tape (forward values only). Used for
/// sampling and evaluation where gradients are never needed.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- element-wise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);   // [m,k] x [k,n]
Tensor transpose(const Tensor& a);                 // 2-D
Tensor add_rowwise(const Tensor& x, const Tensor& bias);      // [n,d] + [d]
Tensor add_channelwise(const Tensor& x, const Tensor& bias);  // [c,h,w] + [c]

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, int64_t r0, int64_t r1);   // 2-D, [r0, r1)
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);   // 2-D, [c0, c1)
Tensor concat_rows(const std::vector<Tensor>& parts);         // 2-D
Tensor concat_cols(const std::vector<Tensor>& parts);         // 2-D
Tensor concat_channels(const std::vector<Tensor>& parts);     // 3-D [c,h,w]
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);

// ---- normalization / activations over rows ----
Tensor softmax(const Tensor& x);  // last axis, max-stabilized
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// ---- spatial ----
Tensor conv2d(const Tensor& x, const Tensor& kernels, int pad = 1);  // same padding
Tensor avg_pool_2x2(const Tensor& x);
Tensor upsample_nearest_2x(const Tensor& x);

// ---- reductions / losses ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
/// Sum over rows of -log softmax(logits)[row, ids[row]].
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& ids);

}  // namespace smartedit
