#include "odgn/walker.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace odgn {

namespace {

std::vector<std::size_t> walkable_nodes(const Matrix& flows)
{
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < flows.rows(); ++i)
    if (flows.row(i).sum() - flows(i, i) > 0.0) out.push_back(static_cast<std::size_t>(i));
  return out;
}

Matrix assemble_features(const WalkContext& ctx, const std::vector<std::vector<std::size_t>>& paths,
                         const Matrix& edge_flows, std::size_t length)
{
  const Eigen::Index a = ctx.attributes.cols();
  const auto len = static_cast<Eigen::Index>(length);
  Matrix f(static_cast<Eigen::Index>(paths.size()) * len, a + 1);
  for (std::size_t b = 0; b < paths.size(); ++b)
    for (std::size_t t = 0; t < length; ++t) {
      const Eigen::Index row = static_cast<Eigen::Index>(b) * len + static_cast<Eigen::Index>(t);
      f.row(row).head(a) = ctx.attributes.row(static_cast<Eigen::Index>(paths[b][t]));
      f(row, a) = std::log1p(edge_flows(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t))) / ctx.flow_norm;
    }
  return f;
}

void check_context(const WalkContext& ctx, Eigen::Index n)
{
  if (ctx.attributes.rows() != n) throw std::invalid_argument("walk context attributes do not match network size");
  if (!(ctx.flow_norm > 0.0) || !std::isfinite(ctx.flow_norm)) throw std::invalid_argument("flow_norm must be positive");
}

}  // namespace

double flow_feature_norm(const ODNetwork& net)
{
  double mx = 0.0;
  for (std::size_t i = 0; i < net.size(); ++i)
    for (std::size_t j = 0; j < net.size(); ++j)
      if (i != j) mx = std::max(mx, net(i, j));
  return std::max(std::log1p(mx), 1e-12);
}

WalkSequence WalkBatch::sequence(std::size_t b) const
{
  const auto len = static_cast<Eigen::Index>(length);
  return {features.value().middleRows(static_cast<Eigen::Index>(b) * len, len), real};
}

Vector transition_probs(const ODNetwork& net, std::size_t i)
{
  const double total = out_flow(net, i);
  if (!(total > 0.0)) throw DataError("absorbing node " + std::to_string(i));
  Vector p = net.flows().row(static_cast<Eigen::Index>(i)).transpose() / total;
  p(static_cast<Eigen::Index>(i)) = 0.0;
  return p;
}

WalkBatch sample_walks(const ODNetwork& net, const WalkContext& ctx, std::size_t n_walks, std::size_t length,
                       Rng& rng, bool real)
{
  const Matrix& t = net.flows();
  check_context(ctx, t.rows());
  WalkBatch batch;
  batch.length = length;
  batch.real = real;
  batch.edge_flows = Matrix::Zero(static_cast<Eigen::Index>(n_walks), static_cast<Eigen::Index>(length));
  if (n_walks == 0) {
    batch.features = ad::Var::constant(Matrix(0, ctx.attributes.cols() + 1));
    return batch;
  }
  if (length == 0) throw std::invalid_argument("walk length must be positive");

  const auto starts = walkable_nodes(t);
  if (starts.empty()) throw DataError("OD network has no node with positive out-flow");
  const Eigen::Index n = t.rows();

  std::size_t restarts = 0;
  for (std::size_t w = 0; w < n_walks; ++w) {
    std::vector<std::size_t> path;
    std::size_t start = 0;
    bool done = false;
    while (!done) {
      path.clear();
      start = starts[rng.index(starts.size())];
      std::size_t cur = start;
      done = true;
      for (std::size_t step = 0; step < length; ++step) {
        const auto ci = static_cast<Eigen::Index>(cur);
        const double total = t.row(ci).sum() - t(ci, ci);
        if (!(total > 0.0)) {
          if (++restarts > kMaxWalkRestarts) throw DataError("walk restarts exhausted on absorbing nodes");
          done = false;
          break;
        }
        double u = rng.uniform() * total;
        Eigen::Index next = -1;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (j == ci || t(ci, j) <= 0.0) continue;
          next = j;
          u -= t(ci, j);
          if (u < 0.0) break;
        }
        batch.edge_flows(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(step)) = t(ci, next);
        cur = static_cast<std::size_t>(next);
        path.push_back(cur);
      }
    }
    batch.starts.push_back(start);
    batch.paths.push_back(std::move(path));
  }
  batch.features = ad::Var::constant(assemble_features(ctx, batch.paths, batch.edge_flows, length));
  return batch;
}

WalkBatch sample_walks_st(const ad::Var& flows, const WalkContext& ctx, std::size_t n_walks, std::size_t length,
                          double tau, Rng& rng)
{
  if (!(tau > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  const Matrix& t = flows.value();
  const Eigen::Index n = t.rows();
  check_context(ctx, n);
  WalkBatch batch;
  batch.length = length;
  batch.real = false;
  const auto b = static_cast<Eigen::Index>(n_walks);
  const auto len = static_cast<Eigen::Index>(length);
  batch.edge_flows = Matrix::Zero(b, len);
  if (n_walks == 0) {
    batch.features = ad::Var::constant(Matrix(0, ctx.attributes.cols() + 1));
    return batch;
  }
  if (length == 0) throw std::invalid_argument("walk length must be positive");

  const auto starts = walkable_nodes(t);
  if (starts.empty()) throw DataError("OD network has no node with positive out-flow");

  // Pass 1: hard choices by Gumbel-max, remembering the perturbations of each step.
  std::vector<Matrix> gumbel(length, Matrix::Zero(b, n));
  std::size_t restarts = 0;
  for (Eigen::Index w = 0; w < b; ++w) {
    std::vector<std::size_t> path;
    std::size_t start = 0;
    bool done = false;
    while (!done) {
      path.clear();
      start = starts[rng.index(starts.size())];
      std::size_t cur = start;
      done = true;
      for (std::size_t step = 0; step < length; ++step) {
        const auto ci = static_cast<Eigen::Index>(cur);
        const double total = t.row(ci).sum() - t(ci, ci);
        if (!(total > 0.0)) {
          if (++restarts > kMaxWalkRestarts) throw DataError("walk restarts exhausted on absorbing nodes");
          done = false;
          break;
        }
        Eigen::Index best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
          const double g = rng.gumbel();
          gumbel[step](w, j) = g;
          if (j == ci || t(ci, j) <= 0.0) continue;
          const double score = std::log(t(ci, j) / total) + g;
          if (score > best_score) {
            best_score = score;
            best = j;
          }
        }
        batch.edge_flows(w, static_cast<Eigen::Index>(step)) = t(ci, best);
        cur = static_cast<std::size_t>(best);
        path.push_back(cur);
      }
    }
    batch.starts.push_back(start);
    batch.paths.push_back(std::move(path));
  }

  // Pass 2: the differentiable relaxation around those choices.
  const ad::Var off = ad::mul_const(flows, off_diagonal_mask(static_cast<std::size_t>(n)));
  const ad::Var attrs = ad::Var::constant(ctx.attributes);
  std::vector<ad::Var> steps;
  steps.reserve(length);
  std::vector<Eigen::Index> cur(static_cast<std::size_t>(b));
  for (Eigen::Index w = 0; w < b; ++w) cur[static_cast<std::size_t>(w)] = static_cast<Eigen::Index>(batch.starts[static_cast<std::size_t>(w)]);
  for (std::size_t step = 0; step < length; ++step) {
    ad::Var rows = ad::select_rows(off, cur);
    BoolMatrix mask = rows.value().array() > 0.0;
    Matrix pad = Matrix::Zero(b, n);
    for (Eigen::Index i = 0; i < pad.size(); ++i)
      if (!mask.data()[i]) pad.data()[i] = 1.0;
    ad::Var probs = ad::div_rows(rows, ad::row_sum(rows));
    ad::Var logits = ad::scale(ad::add_const(ad::log(ad::add_const(probs, pad)), gumbel[step]), 1.0 / tau);
    ad::Var soft = ad::masked_row_softmax(logits, mask);
    Matrix hard = Matrix::Zero(b, n);
    for (Eigen::Index w = 0; w < b; ++w)
      hard(w, static_cast<Eigen::Index>(batch.paths[static_cast<std::size_t>(w)][step])) = 1.0;
    ad::Var choice = ad::straight_through(hard, soft);
    ad::Var flow = ad::row_sum(ad::mul(choice, rows));
    ad::Var flow_feature = ad::scale(ad::log1p(flow), 1.0 / ctx.flow_norm);
    const std::array<ad::Var, 2> parts{ad::matmul(choice, attrs), flow_feature};
    steps.push_back(ad::concat_cols(parts));
    for (Eigen::Index w = 0; w < b; ++w)
      cur[static_cast<std::size_t>(w)] = static_cast<Eigen::Index>(batch.paths[static_cast<std::size_t>(w)][step]);
  }
  batch.features = ad::stack_steps(steps);
  return batch;
}

}  // namespace odgn
