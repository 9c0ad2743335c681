#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major matrices.
//
// A Var is a handle to a graph node. Operations build the graph eagerly; calling
// backward() on a 1x1 result accumulates d(result)/d(leaf) into every leaf that
// requires a gradient. Nodes that do not depend on any parameter carry no
// backward closure, so constant subgraphs cost nothing at backward time.

#include "odgn/core.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace odgn::ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;
};

class Var {
 public:
  Var() = default;

  static Var constant(Matrix value);
  static Var parameter(Matrix value);

  const Matrix& value() const { return node_->value; }
  /// Direct access for optimizers and loaders; invalidates nothing downstream.
  Matrix& mutable_value() { return node_->value; }
  /// Gradient, or an all-zero matrix of the value's shape if none accumulated.
  Matrix grad() const;
  bool has_grad() const { return node_->grad.size() != 0; }
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  /// Only meaningful on leaves: freezes or unfreezes a parameter.
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  friend Var make_var(Matrix, std::vector<Var>, std::function<void(const Node&)>);
  std::shared_ptr<Node> node_;
};

/// Builds an op result. `fn` is dropped when no input requires a gradient or grad mode is off.
Var make_var(Matrix value, std::vector<Var> inputs, std::function<void(const Node&)> fn);

/// Seeds d(root)/d(root) = 1 and propagates. root must be 1x1.
void backward(const Var& root);

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Linear algebra and arithmetic.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var add_row(const Var& a, const Var& row);  // broadcast a 1xC row over every row of a
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var add_const(const Var& a, const Matrix& c);
Var mul_const(const Var& a, const Matrix& c);  // elementwise by a constant mask or weights
Var scalar_mul(const Var& s, const Var& a);  // s is 1x1
Var scalar_add(const Var& s, const Var& a);  // s is 1x1

// Elementwise nonlinearities.
Var exp(const Var& a);
Var log(const Var& a);
Var log1p(const Var& a);
Var softplus(const Var& a);
Var elu(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);

// Shape manipulation.
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var select_rows(const Var& a, std::span<const Eigen::Index> rows);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var row_sum(const Var& a);  // N x 1
Var div_rows(const Var& a, const Var& denom);  // a(i, j) / denom(i)

/// out(i, j) = s(i) + t(j) for column vectors s and t.
Var outer_sum(const Var& s, const Var& t);

/// Row-wise softmax restricted to entries where mask is true; other entries are 0.
/// Throws std::domain_error if a row has no unmasked entry.
Var masked_row_softmax(const Var& a, const BoolMatrix& mask);

/// r(i, j) = max(||x_i - x_j||_2, floor).
Var pairwise_distance(const Var& x, double floor);

/// Forward value is `hard`; the backward pass routes the incoming gradient to `soft`.
Var straight_through(const Matrix& hard, const Var& soft);

// Sequence layout: a batch of B sequences of length L is stored as (B*L) x F with
// row b*L + t holding step t of sequence b.

/// Interleaves L per-step B x F blocks into the (B*L) x F sequence layout.
Var stack_steps(std::span<const Var> steps);

/// Causal shift: out[b, t] = a[b, t - k] for t >= k, zero otherwise.
Var shift_time(const Var& a, Eigen::Index batch, Eigen::Index length, Eigen::Index k);

/// Weight normalization: column c of the result is g(c) * v(:, c) / ||v(:, c)||.
Var weight_norm(const Var& v, const Var& g);

}  // namespace odgn::ad
