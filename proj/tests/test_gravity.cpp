#include "odgn/gravity.hpp"
#include "odgn/rng.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace odgn;
using odgn::testing::max_gradient_error;

namespace {

RegionEmbedding emb(double mass, std::initializer_list<double> loc)
{
  RegionEmbedding e;
  e.mass = mass;
  e.location = Vector::Map(loc.begin(), static_cast<Eigen::Index>(loc.size()));
  return e;
}

struct Scene {
  Vector mass;
  Matrix dist;
};

Scene random_scene(Eigen::Index n, Rng& rng)
{
  Scene s;
  s.mass = Vector(n);
  Matrix xy = rng.normal_matrix(n, 2, 5.0);
  for (Eigen::Index i = 0; i < n; ++i) s.mass(i) = 10.0 + 490.0 * rng.uniform();
  s.dist = Matrix(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s.dist(i, j) = std::max((xy.row(i) - xy.row(j)).norm(), 0.5);
  return s;
}

Matrix exact_flows(const Scene& s, const GravityParams& p)
{
  const Eigen::Index n = s.mass.size();
  Matrix t = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j)
        t(i, j) = std::exp(p.log_g) * std::pow(s.mass(i), p.lambda1) * std::pow(s.mass(j), p.lambda2) /
                  std::pow(s.dist(i, j), p.lambda3);
  return t;
}

}  // namespace

TEST_CASE("split_embedding")
{
  Matrix e(2, 4);
  e << 0, 1, 2, 3, -40, 4, 5, 6;
  const auto embs = split_embedding(e);
  CHECK(embs[0].mass == doctest::Approx(std::log(2.0) + 1e-6).epsilon(1e-14));
  CHECK(embs[1].mass == doctest::Approx(1e-6).epsilon(1e-6));
  CHECK(embs[1].mass > 0.0);
  CHECK(embs[0].location.size() == 3);
  CHECK(embs[1].location(2) == 6.0);
  CHECK(split_embedding(Matrix::Zero(3, 64))[0].location.size() == 63);
  CHECK_THROWS(split_embedding(Matrix::Zero(3, 1)));
}

TEST_CASE("predict_flows hand values")
{
  GravityParams p;
  p.log_g = std::log(2.5);
  p.lambda1 = 0.7;
  p.lambda2 = 1.3;
  p.lambda3 = 2.0;
  const ODNetwork unit = predict_flows({emb(1, {0, 0}), emb(1, {3, 4})}, p);
  CHECK(unit(0, 1) == doctest::Approx(2.5 / 25.0));
  p = {0.0, 1.0, 1.0, 0.0};
  CHECK(predict_flows({emb(1, {0, 0}), emb(1, {3, 4})}, p)(1, 0) == doctest::Approx(1.0));

  p = {0.0, 1.0, 1.0, 1.0};
  const ODNetwork t = predict_flows({emb(2, {0}), emb(3, {6})}, p);
  CHECK(t(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(t(0, 0) == 0.0);

  const ODNetwork same = predict_flows({emb(2, {1, 1}), emb(3, {1, 1})}, p);
  CHECK(same(0, 1) == doctest::Approx(6.0 / kLatentDistanceFloor));

  p.log_g = 800.0;
  CHECK_THROWS_WITH_AS(predict_flows({emb(2, {0}), emb(3, {6})}, p), "gravity overflow", NumericError);
}

TEST_CASE("predict_flows role symmetry and distance monotonicity")
{
  Rng rng(21);
  std::vector<RegionEmbedding> embs;
  for (int i = 0; i < 6; ++i) embs.push_back(emb(0.5 + rng.uniform(), {rng.normal(), rng.normal(), rng.normal()}));
  const GravityParams p{0.3, 0.6, 1.4, 1.1};
  const GravityParams swapped{0.3, 1.4, 0.6, 1.1};
  const Matrix a = predict_flows(embs, p).flows();
  const Matrix b = predict_flows(embs, swapped).flows();
  CHECK((a - b.transpose()).cwiseAbs().maxCoeff() < 1e-12);

  double prev = std::numeric_limits<double>::infinity();
  for (double x : {0.01, 0.1, 0.5, 1.0, 4.0}) {
    const double v = predict_flows({emb(1.2, {0, 0}), emb(0.9, {x, 0})}, p)(0, 1);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("decode_flows agrees with predict_flows and differentiates correctly")
{
  Rng rng(22);
  ad::Var e = ad::Var::parameter(rng.normal_matrix(5, 4));
  GravityVars g = GravityVars::init({0.2, 0.8, 1.1, 1.3});
  const DecodedFlows d = decode_flows(e, g);
  const Matrix want = predict_flows(split_embedding(e.value()), g.values()).flows();
  CHECK((d.flows.value() - want).cwiseAbs().maxCoeff() < 1e-12 * want.maxCoeff());

  const Matrix w = rng.normal_matrix(5, 5);
  std::vector<ad::Var*> ps{&e};
  for (auto* p : g.parameters()) ps.push_back(p);
  CHECK(max_gradient_error([&] { return ad::sum(ad::mul_const(decode_flows(e, g).flows, w)); }, ps) < 1e-4);

  ad::Var mass = ad::Var::parameter((rng.normal_matrix(4, 1).array().abs() + 0.5).matrix());
  ad::Var loc = ad::Var::parameter(rng.normal_matrix(4, 2));
  std::vector<ad::Var*> ps2{&mass, &loc};
  CHECK(max_gradient_error([&] { return ad::sum(ad::mul_const(gravity_flows(mass, loc, g), w.topLeftCorner(4, 4))); },
                           ps2) < 1e-4);
}

TEST_CASE("log-space OLS recovers exact parameters")
{
  Rng rng(23);
  const Scene s = random_scene(15, rng);
  const GravityParams truth{-3.2, 0.8, 1.05, 1.7};
  const GravityFit fit = fit_decoder_logspace(ODNetwork(exact_flows(s, truth)), s.mass, s.dist);
  CHECK(fit.max_residual < 1e-9);
  CHECK(fit.params.log_g == doctest::Approx(truth.log_g).epsilon(1e-9));
  CHECK(fit.params.lambda1 == doctest::Approx(truth.lambda1).epsilon(1e-9));
  CHECK(fit.params.lambda2 == doctest::Approx(truth.lambda2).epsilon(1e-9));
  CHECK(fit.params.lambda3 == doctest::Approx(truth.lambda3).epsilon(1e-9));
  CHECK(fit.pairs == 15 * 14);
}

TEST_CASE("constant flows, masses and distances give zero exponents")
{
  const Eigen::Index n = 4;
  Matrix t = Matrix::Constant(n, n, 7.0);
  t.diagonal().setZero();
  const GravityFit fit = fit_decoder_logspace(ODNetwork(t), Vector::Constant(n, 3.0), Matrix::Constant(n, n, 2.0));
  CHECK(fit.params.lambda1 == 0.0);
  CHECK(fit.params.lambda2 == 0.0);
  CHECK(fit.params.lambda3 == 0.0);
  CHECK(fit.params.g() == doctest::Approx(7.0));
}

TEST_CASE("singular or empty designs are rejected")
{
  CHECK_THROWS_AS(fit_gravity_logspace({}), NumericError);
  // Origin and destination masses are collinear.
  std::vector<GravityObservation> obs;
  for (double m : {1.0, 2.0, 3.0, 4.0, 5.0}) obs.push_back({m * m, m, m, 1.0 + m});
  CHECK_THROWS_AS(fit_gravity_logspace(obs), NumericError);
  CHECK_THROWS(fit_gravity_logspace({{1.0, -1.0, 1.0, 1.0}}));
}

TEST_CASE("Poisson-noised flows with means of at least 50 recover exponents within 5%")
{
  const GravityParams truth{0.0, 0.8, 1.0, 1.5};
  std::vector<double> err1, err2, err3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    const Scene s = random_scene(30, rng);
    Matrix mu = exact_flows(s, truth);
    double lowest = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < mu.rows(); ++i)
      for (Eigen::Index j = 0; j < mu.cols(); ++j)
        if (i != j) lowest = std::min(lowest, mu(i, j));
    mu *= 50.0 / lowest;
    Matrix noisy = mu;
    for (Eigen::Index k = 0; k < noisy.size(); ++k) noisy.data()[k] = static_cast<double>(rng.poisson(mu.data()[k]));
    const GravityFit fit = fit_decoder_logspace(ODNetwork(noisy), s.mass, s.dist);
    err1.push_back(std::abs(fit.params.lambda1 / truth.lambda1 - 1.0));
    err2.push_back(std::abs(fit.params.lambda2 / truth.lambda2 - 1.0));
    err3.push_back(std::abs(fit.params.lambda3 / truth.lambda3 - 1.0));
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + 5, v.end());
    return v[5];
  };
  CHECK(median(err1) < 0.05);
  CHECK(median(err2) < 0.05);
  CHECK(median(err3) < 0.05);
}
