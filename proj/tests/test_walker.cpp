#include "odgn/walker.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace odgn;

namespace {

WalkContext context(Eigen::Index n, Eigen::Index a, const ODNetwork& net)
{
  WalkContext ctx;
  ctx.attributes = Matrix(n, a);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < a; ++c) ctx.attributes(i, c) = static_cast<double>(10 * i + c);
  ctx.flow_norm = flow_feature_norm(net);
  return ctx;
}

ODNetwork five_node()
{
  Matrix t(5, 5);
  t << 3, 4, 1, 0, 5,
       2, 0, 2, 6, 0,
       1, 1, 0, 1, 1,
       0, 0, 9, 0, 1,
       7, 1, 0, 2, 9;
  return ODNetwork(t);
}

/// Two-sample Kolmogorov-Smirnov statistic for integer-valued samples.
double ks_statistic(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b, std::size_t levels)
{
  std::vector<double> ca(levels, 0.0), cb(levels, 0.0);
  for (auto v : a) ca[v] += 1.0 / static_cast<double>(a.size());
  for (auto v : b) cb[v] += 1.0 / static_cast<double>(b.size());
  double fa = 0.0, fb = 0.0, d = 0.0;
  for (std::size_t k = 0; k < levels; ++k) {
    fa += ca[k];
    fb += cb[k];
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

}  // namespace

TEST_CASE("transition_probs")
{
  Matrix t(3, 3);
  t << 0, 2, 2, 0, 0, 0, 0, 1, 3;
  const ODNetwork net(t);
  Vector p = transition_probs(net, 0);
  CHECK(p(0) == 0.0);
  CHECK(p(1) == 0.5);
  CHECK(p(2) == 0.5);
  Matrix u(3, 3);
  u << 5, 1, 3, 0, 0, 0, 0, 0, 0;
  p = transition_probs(ODNetwork(u), 0);
  CHECK(p(1) == 0.25);
  CHECK(p(2) == 0.75);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_WITH_AS(transition_probs(net, 1), doctest::Contains("absorbing node"), DataError);

  const Vector scaled = transition_probs(ODNetwork(u * 13.0), 0);
  CHECK((scaled - transition_probs(ODNetwork(u), 0)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("empirical transition frequencies converge to the flow ratios")
{
  const ODNetwork net = five_node();
  const WalkContext ctx = context(5, 2, net);
  Rng rng(31);
  const WalkBatch b = sample_walks(net, ctx, 6250, 16, rng);
  Matrix counts = Matrix::Zero(5, 5);
  for (std::size_t w = 0; w < b.size(); ++w) {
    std::size_t cur = b.starts[w];
    for (std::size_t next : b.paths[w]) {
      counts(cur, next) += 1.0;
      cur = next;
    }
  }
  CHECK(counts.sum() == 100000.0);
  for (std::size_t i = 0; i < 5; ++i) {
    const double visits = counts.row(i).sum();
    REQUIRE(visits > 0.0);
    const Vector p = transition_probs(net, i);
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(counts(i, j) / visits - p(j)) <= 0.01);
  }
}

TEST_CASE("walk features and basic contracts")
{
  Matrix t(2, 2);
  t << 0, 5, 5, 0;
  const ODNetwork net(t);
  const WalkContext ctx = context(2, 3, net);
  Rng rng(32);
  const WalkBatch b = sample_walks(net, ctx, 4, 6, rng);
  REQUIRE(b.size() == 4);
  CHECK(b.features.rows() == 24);
  CHECK(b.features.cols() == 4);
  for (std::size_t w = 0; w < 4; ++w) {
    std::size_t cur = b.starts[w];
    const WalkSequence s = b.sequence(w);
    CHECK(s.real);
    for (std::size_t step = 0; step < 6; ++step) {
      CHECK(b.paths[w][step] == 1 - cur);
      cur = b.paths[w][step];
      CHECK(s.steps(static_cast<Eigen::Index>(step), 3) == doctest::Approx(1.0));  // log1p(5) / log1p(max=5)
      CHECK(s.steps.row(static_cast<Eigen::Index>(step)).head(3) == ctx.attributes.row(static_cast<Eigen::Index>(cur)));
    }
  }
  CHECK(sample_walks(net, ctx, 0, 6, rng).size() == 0);
}

TEST_CASE("walks never cross zero-flow edges and are deterministic")
{
  const ODNetwork net = five_node();
  const WalkContext ctx = context(5, 1, net);
  Rng r1(33), r2(33);
  const WalkBatch a = sample_walks(net, ctx, 200, 16, r1);
  const WalkBatch b = sample_walks(net, ctx, 200, 16, r2);
  CHECK(a.paths == b.paths);
  CHECK(a.starts == b.starts);
  CHECK(a.features.value() == b.features.value());
  for (std::size_t w = 0; w < a.size(); ++w) {
    std::size_t cur = a.starts[w];
    for (std::size_t next : a.paths[w]) {
      CHECK(net(cur, next) > 0.0);
      CHECK(cur != next);
      cur = next;
    }
  }
}

TEST_CASE("absorbing nodes trigger restarts and eventually an error")
{
  Matrix t = Matrix::Zero(3, 3);
  t(0, 1) = 1.0;  // 0 -> 1, and 1 is absorbing
  const ODNetwork net(t);
  const WalkContext ctx = context(3, 1, net);
  Rng rng(34);
  CHECK_THROWS_AS(sample_walks(net, ctx, 1, 3, rng), DataError);
  CHECK_THROWS_AS(sample_walks(ODNetwork(Matrix::Zero(3, 3)), ctx, 1, 3, rng), DataError);

  t(1, 0) = 1.0;
  t(2, 2) = 4.0;  // only a self-loop: not a valid start
  const WalkBatch b = sample_walks(ODNetwork(t), ctx, 50, 4, rng);
  for (auto s : b.starts) CHECK(s != 2);
}

TEST_CASE("straight-through forward values equal the hard one-hot selection")
{
  const ODNetwork net = five_node();
  const WalkContext ctx = context(5, 2, net);
  Rng rng(35);
  const ad::Var flows = ad::Var::parameter(net.flows());
  const WalkBatch b = sample_walks_st(flows, ctx, 20, 8, 0.66, rng);
  CHECK_FALSE(b.real);
  for (std::size_t w = 0; w < b.size(); ++w) {
    std::size_t cur = b.starts[w];
    for (std::size_t step = 0; step < 8; ++step) {
      const std::size_t next = b.paths[w][step];
      CHECK(net(cur, next) > 0.0);
      const auto row = static_cast<Eigen::Index>(w * 8 + step);
      CHECK(b.features.value().row(row).head(2) == ctx.attributes.row(static_cast<Eigen::Index>(next)));
      CHECK(b.features.value()(row, 2) == doctest::Approx(std::log1p(net(cur, next)) / ctx.flow_norm).epsilon(1e-14));
      cur = next;
    }
  }
}

TEST_CASE("straight-through sampler matches the hard sampler in distribution (KS, tau = 0.01)")
{
  const ODNetwork net = five_node();
  const WalkContext ctx = context(5, 1, net);
  Rng r_hard(36), r_st(37);
  const WalkBatch hard = sample_walks(net, ctx, 10000, 4, r_hard);
  ad::NoGradGuard no_grad;
  const WalkBatch st = sample_walks_st(ad::Var::constant(net.flows()), ctx, 10000, 4, 0.01, r_st);
  for (std::size_t step : {0u, 3u}) {
    std::vector<std::size_t> a, b;
    for (std::size_t w = 0; w < 10000; ++w) {
      a.push_back(hard.paths[w][step]);
      b.push_back(st.paths[w][step]);
    }
    // Critical value at alpha = 0.001 for two samples of 10^4: 1.95 * sqrt(2 / 10^4).
    CHECK(ks_statistic(a, b, 5) < 1.95 * std::sqrt(2.0 / 10000.0));
  }
}

TEST_CASE("gradients reach generated flows on sampled edges")
{
  const ODNetwork net = five_node();
  const WalkContext ctx = context(5, 2, net);
  Rng rng(38);
  ad::Var flows = ad::Var::parameter(net.flows());
  const WalkBatch b = sample_walks_st(flows, ctx, 3, 5, 0.66, rng);
  ad::backward(ad::sum(ad::slice_cols(b.features, 2, 1)));
  const Matrix g = flows.grad();
  for (std::size_t w = 0; w < b.size(); ++w) {
    std::size_t cur = b.starts[w];
    for (std::size_t next : b.paths[w]) {
      CHECK(g(static_cast<Eigen::Index>(cur), static_cast<Eigen::Index>(next)) != 0.0);
      cur = next;
    }
  }
  CHECK(g.diagonal().isZero());
}

TEST_CASE("flow_feature_norm uses the largest off-diagonal flow")
{
  Matrix t(2, 2);
  t << 100, 3, 7, 0;
  CHECK(flow_feature_norm(ODNetwork(t)) == doctest::Approx(std::log1p(7.0)));
}
