#include "odgn/autograd.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace odgn::ad {

namespace {

thread_local bool g_grad_enabled = true;

template <typename Expr>
void accumulate(Node& n, const Expr& g)
{
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

void check_same_shape(const Var& a, const Var& b, const char* op)
{
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df)
{
  Matrix out = a.value().unaryExpr(f);
  auto pa = a.node();
  return make_var(std::move(out), {a}, [pa, df](const Node& self) {
    accumulate(*pa, (self.grad.array() * pa->value.binaryExpr(self.value, df).array()).matrix());
  });
}

}  // namespace

Matrix Var::grad() const
{
  if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
  return node_->grad;
}

double Var::item() const
{
  if (rows() != 1 || cols() != 1) throw std::logic_error("item() on a non-scalar Var");
  return node_->value(0, 0);
}

Var Var::constant(Matrix value)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

Var Var::parameter(Matrix value)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

Var make_var(Matrix value, std::vector<Var> inputs, std::function<void(const Node&)> fn)
{
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        n->requires_grad = true;
        break;
      }
    }
  }
  if (n->requires_grad) {
    n->parents.reserve(inputs.size());
    for (auto& in : inputs)
      if (in.requires_grad()) n->parents.push_back(in.node());
    n->backward_fn = std::move(fn);
  }
  return Var(std::move(n));
}

void backward(const Var& root)
{
  if (root.rows() != 1 || root.cols() != 1) throw std::logic_error("backward() needs a scalar root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; reversing it yields a topological order from the root.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Node& r = *root.node();
  accumulate(r, Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
  // Intermediate gradients are no longer needed; leaves keep theirs.
  for (Node* n : order)
    if (n->backward_fn) n->grad.resize(0, 0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var matmul(const Var& a, const Var& b)
{
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix out = a.value() * b.value();
  auto pa = a.node();
  auto pb = b.node();
  return make_var(std::move(out), {a, b}, [pa, pb](const Node& self) {
    if (pa->requires_grad) accumulate(*pa, self.grad * pb->value.transpose());
    if (pb->requires_grad) accumulate(*pb, pa->value.transpose() * self.grad);
  });
}

Var add(const Var& a, const Var& b)
{
  check_same_shape(a, b, "add");
  auto pa = a.node();
  auto pb = b.node();
  return make_var(a.value() + b.value(), {a, b}, [pa, pb](const Node& self) {
    accumulate(*pa, self.grad);
    accumulate(*pb, self.grad);
  });
}

Var sub(const Var& a, const Var& b)
{
  check_same_shape(a, b, "sub");
  auto pa = a.node();
  auto pb = b.node();
  return make_var(a.value() - b.value(), {a, b}, [pa, pb](const Node& self) {
    accumulate(*pa, self.grad);
    accumulate(*pb, -self.grad);
  });
}

Var mul(const Var& a, const Var& b)
{
  check_same_shape(a, b, "mul");
  auto pa = a.node();
  auto pb = b.node();
  return make_var(a.value().cwiseProduct(b.value()), {a, b}, [pa, pb](const Node& self) {
    accumulate(*pa, self.grad.cwiseProduct(pb->value));
    accumulate(*pb, self.grad.cwiseProduct(pa->value));
  });
}

Var add_row(const Var& a, const Var& row)
{
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bad row shape");
  Matrix out = a.value().rowwise() + row.value().row(0);
  auto pa = a.node();
  auto pr = row.node();
  return make_var(std::move(out), {a, row}, [pa, pr](const Node& self) {
    accumulate(*pa, self.grad);
    if (pr->requires_grad) accumulate(*pr, self.grad.colwise().sum());
  });
}

Var scale(const Var& a, double c)
{
  auto pa = a.node();
  return make_var(a.value() * c, {a}, [pa, c](const Node& self) { accumulate(*pa, self.grad * c); });
}

Var add_const(const Var& a, double c)
{
  auto pa = a.node();
  Matrix out = a.value().array() + c;
  return make_var(std::move(out), {a}, [pa](const Node& self) { accumulate(*pa, self.grad); });
}

Var add_const(const Var& a, const Matrix& c)
{
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw std::invalid_argument("add_const: shape mismatch");
  auto pa = a.node();
  return make_var(a.value() + c, {a}, [pa](const Node& self) { accumulate(*pa, self.grad); });
}

Var mul_const(const Var& a, const Matrix& c)
{
  if (c.rows() != a.rows() || c.cols() != a.cols()) throw std::invalid_argument("mul_const: shape mismatch");
  auto pa = a.node();
  return make_var(a.value().cwiseProduct(c), {a}, [pa, c](const Node& self) {
    accumulate(*pa, self.grad.cwiseProduct(c));
  });
}

Var scalar_mul(const Var& s, const Var& a)
{
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scalar_mul: s must be 1x1");
  auto ps = s.node();
  auto pa = a.node();
  return make_var(a.value() * s.item(), {s, a}, [ps, pa](const Node& self) {
    if (ps->requires_grad) accumulate(*ps, Matrix::Constant(1, 1, self.grad.cwiseProduct(pa->value).sum()));
    accumulate(*pa, self.grad * ps->value(0, 0));
  });
}

Var scalar_add(const Var& s, const Var& a)
{
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scalar_add: s must be 1x1");
  auto ps = s.node();
  auto pa = a.node();
  Matrix out = a.value().array() + s.item();
  return make_var(std::move(out), {s, a}, [ps, pa](const Node& self) {
    if (ps->requires_grad) accumulate(*ps, Matrix::Constant(1, 1, self.grad.sum()));
    accumulate(*pa, self.grad);
  });
}

Var exp(const Var& a)
{
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a)
{
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var log1p(const Var& a)
{
  return unary(a, [](double x) { return std::log1p(x); }, [](double x, double) { return 1.0 / (1.0 + x); });
}

Var softplus(const Var& a)
{
  return unary(
      a, [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var elu(const Var& a)
{
  return unary(
      a, [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; });
}

Var relu(const Var& a)
{
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope)
{
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var concat_cols(std::span<const Var> parts)
{
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += p.cols();
  }
  return make_var(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                  [nodes, offsets](const Node& self) {
                    for (std::size_t k = 0; k < nodes.size(); ++k)
                      accumulate(*nodes[k], self.grad.middleCols(offsets[k], nodes[k]->value.cols()));
                  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count)
{
  if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("slice_cols: bad range");
  auto pa = a.node();
  Matrix out = a.value().middleCols(start, count);
  return make_var(std::move(out), {a}, [pa, start, count](const Node& self) {
    if (!pa->requires_grad) return;
    if (pa->grad.size() == 0) pa->grad = Matrix::Zero(pa->value.rows(), pa->value.cols());
    pa->grad.middleCols(start, count) += self.grad;
  });
}

Var select_rows(const Var& a, std::span<const Eigen::Index> rows)
{
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= a.rows()) throw std::out_of_range("select_rows: index out of range");
    out.row(static_cast<Eigen::Index>(r)) = a.value().row(rows[r]);
  }
  auto pa = a.node();
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return make_var(std::move(out), {a}, [pa, idx = std::move(idx)](const Node& self) {
    if (!pa->requires_grad) return;
    if (pa->grad.size() == 0) pa->grad = Matrix::Zero(pa->value.rows(), pa->value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) pa->grad.row(idx[r]) += self.grad.row(static_cast<Eigen::Index>(r));
  });
}

Var sum(const Var& a)
{
  auto pa = a.node();
  return make_var(Matrix::Constant(1, 1, a.value().sum()), {a}, [pa](const Node& self) {
    accumulate(*pa, Matrix::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
  });
}

Var mean(const Var& a)
{
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var row_sum(const Var& a)
{
  auto pa = a.node();
  Matrix out = a.value().rowwise().sum();
  return make_var(std::move(out), {a}, [pa](const Node& self) {
    accumulate(*pa, self.grad.col(0).replicate(1, pa->value.cols()));
  });
}

Var div_rows(const Var& a, const Var& denom)
{
  if (denom.cols() != 1 || denom.rows() != a.rows()) throw std::invalid_argument("div_rows: bad denominator shape");
  Matrix out = a.value().array().colwise() / denom.value().col(0).array();
  auto pa = a.node();
  auto pd = denom.node();
  return make_var(std::move(out), {a, denom}, [pa, pd](const Node& self) {
    const auto d = pd->value.col(0).array();
    if (pa->requires_grad) accumulate(*pa, (self.grad.array().colwise() / d).matrix());
    if (pd->requires_grad) {
      Matrix gd = -(self.grad.cwiseProduct(pa->value).rowwise().sum().array() / d.square()).matrix();
      accumulate(*pd, gd);
    }
  });
}

Var outer_sum(const Var& s, const Var& t)
{
  if (s.cols() != 1 || t.cols() != 1) throw std::invalid_argument("outer_sum: expects column vectors");
  Matrix out(s.rows(), t.rows());
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index j = 0; j < t.rows(); ++j) out(i, j) = s.value()(i, 0) + t.value()(j, 0);
  auto ps = s.node();
  auto pt = t.node();
  return make_var(std::move(out), {s, t}, [ps, pt](const Node& self) {
    if (ps->requires_grad) accumulate(*ps, self.grad.rowwise().sum());
    if (pt->requires_grad) accumulate(*pt, self.grad.colwise().sum().transpose());
  });
}

Var masked_row_softmax(const Var& a, const BoolMatrix& mask)
{
  if (mask.rows() != a.rows() || mask.cols() != a.cols())
    throw std::invalid_argument("masked_row_softmax: mask shape mismatch");
  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j)) mx = std::max(mx, x(i, j));
    if (mx == -std::numeric_limits<double>::infinity())
      throw std::domain_error("masked_row_softmax: row " + std::to_string(i) + " has no admissible entry");
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (mask(i, j)) z += (out(i, j) = std::exp(x(i, j) - mx));
    out.row(i) /= z;
  }
  auto pa = a.node();
  return make_var(std::move(out), {a}, [pa](const Node& self) {
    const Matrix& y = self.value;
    Vector dot = self.grad.cwiseProduct(y).rowwise().sum();
    Matrix g = y.array() * (self.grad.array().colwise() - dot.array());
    accumulate(*pa, g);
  });
}

Var pairwise_distance(const Var& x, double floor)
{
  const Matrix& v = x.value();
  const Eigen::Index n = v.rows();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = floor;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = std::max((v.row(i) - v.row(j)).norm(), floor);
      out(i, j) = d;
      out(j, i) = d;
    }
  }
  auto px = x.node();
  return make_var(std::move(out), {x}, [px, floor](const Node& self) {
    const Matrix& v = px->value;
    const Eigen::Index n = v.rows();
    Matrix g = Matrix::Zero(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double r = (v.row(i) - v.row(j)).norm();
        if (r <= floor) continue;
        const double c = self.grad(i, j) / r;
        g.row(i) += c * (v.row(i) - v.row(j));
        g.row(j) -= c * (v.row(i) - v.row(j));
      }
    }
    accumulate(*px, g);
  });
}

Var straight_through(const Matrix& hard, const Var& soft)
{
  if (hard.rows() != soft.rows() || hard.cols() != soft.cols())
    throw std::invalid_argument("straight_through: shape mismatch");
  auto ps = soft.node();
  return make_var(hard, {soft}, [ps](const Node& self) { accumulate(*ps, self.grad); });
}

Var stack_steps(std::span<const Var> steps)
{
  if (steps.empty()) throw std::invalid_argument("stack_steps: no steps");
  const Eigen::Index b = steps.front().rows();
  const Eigen::Index f = steps.front().cols();
  const auto len = static_cast<Eigen::Index>(steps.size());
  Matrix out(b * len, f);
  std::vector<std::shared_ptr<Node>> nodes;
  for (Eigen::Index t = 0; t < len; ++t) {
    const Var& s = steps[static_cast<std::size_t>(t)];
    if (s.rows() != b || s.cols() != f) throw std::invalid_argument("stack_steps: inconsistent step shapes");
    for (Eigen::Index r = 0; r < b; ++r) out.row(r * len + t) = s.value().row(r);
    nodes.push_back(s.node());
  }
  return make_var(std::move(out), std::vector<Var>(steps.begin(), steps.end()), [nodes, b, len](const Node& self) {
    for (Eigen::Index t = 0; t < len; ++t) {
      Node& n = *nodes[static_cast<std::size_t>(t)];
      if (!n.requires_grad) continue;
      Matrix g(b, self.grad.cols());
      for (Eigen::Index r = 0; r < b; ++r) g.row(r) = self.grad.row(r * len + t);
      accumulate(n, g);
    }
  });
}

Var shift_time(const Var& a, Eigen::Index batch, Eigen::Index length, Eigen::Index k)
{
  if (a.rows() != batch * length) throw std::invalid_argument("shift_time: rows != batch * length");
  if (k == 0) return a;
  Matrix out = Matrix::Zero(a.rows(), a.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    if (length > k) out.middleRows(b * length + k, length - k) = a.value().middleRows(b * length, length - k);
  auto pa = a.node();
  return make_var(std::move(out), {a}, [pa, batch, length, k](const Node& self) {
    Matrix g = Matrix::Zero(self.grad.rows(), self.grad.cols());
    for (Eigen::Index b = 0; b < batch; ++b)
      if (length > k) g.middleRows(b * length, length - k) = self.grad.middleRows(b * length + k, length - k);
    accumulate(*pa, g);
  });
}

Var weight_norm(const Var& v, const Var& g)
{
  if (g.rows() != 1 || g.cols() != v.cols()) throw std::invalid_argument("weight_norm: g must be 1 x cols(v)");
  const Matrix& vv = v.value();
  // A zero direction column yields a zero weight column (and no gradient to it).
  Eigen::RowVectorXd norms = vv.colwise().norm();
  Eigen::RowVectorXd inv = norms.unaryExpr([](double x) { return x > 0.0 ? 1.0 / x : 0.0; });
  Matrix out = vv.array().rowwise() * (g.value().row(0).array() * inv.array());
  auto pv = v.node();
  auto pg = g.node();
  return make_var(std::move(out), {v, g}, [pv, pg, inv](const Node& self) {
    const Matrix u = pv->value.array().rowwise() * inv.array();
    const Eigen::RowVectorXd proj = self.grad.cwiseProduct(u).colwise().sum();
    if (pg->requires_grad) accumulate(*pg, proj);
    if (pv->requires_grad) {
      Matrix gv = (self.grad - Matrix(u.array().rowwise() * proj.array())).array().rowwise() *
                  (pg->value.row(0).array() * inv.array());
      accumulate(*pv, gv);
    }
  });
}

}  // namespace odgn::ad
