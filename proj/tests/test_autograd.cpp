#include "odgn/autograd.hpp"
#include "odgn/rng.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <array>

using namespace odgn;
using odgn::testing::max_gradient_error;

namespace {

ad::Var param(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0)
{
  return ad::Var::parameter(rng.normal_matrix(r, c, sd));
}

/// Reduces any matrix to a scalar with fixed random weights so every entry matters.
ad::Var reduce(const ad::Var& x, std::uint64_t seed = 99)
{
  Rng rng(seed);
  return ad::sum(ad::mul_const(x, rng.normal_matrix(x.rows(), x.cols())));
}

}  // namespace

TEST_CASE("elementwise and linear ops match finite differences")
{
  Rng rng(1);
  ad::Var a = param(3, 4, rng);
  ad::Var b = param(3, 4, rng);
  ad::Var c = param(4, 2, rng);
  ad::Var row = param(1, 4, rng);
  ad::Var s = param(1, 1, rng);
  std::vector<ad::Var*> ps{&a, &b, &c, &row, &s};

  CHECK(max_gradient_error([&] { return reduce(ad::matmul(a, c)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::add(a, b)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::sub(a, b)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::mul(a, b)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::add_row(a, row)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::scale(a, -2.5)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::scalar_mul(s, a)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::scalar_add(s, a)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::exp(a)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::log(ad::exp(a))); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::log1p(ad::exp(a))); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::softplus(a)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::elu(a)); }, ps) < 1e-5);
  CHECK(max_gradient_error([&] { return reduce(ad::relu(a)); }, ps) < 1e-5);
  CHECK(max_gradient_error([&] { return reduce(ad::leaky_relu(a, 0.2)); }, ps) < 1e-5);
  CHECK(max_gradient_error([&] { return ad::mean(ad::mul(a, a)); }, ps) < 1e-6);
}

TEST_CASE("shape ops and reductions match finite differences")
{
  Rng rng(2);
  ad::Var a = param(4, 3, rng);
  ad::Var b = param(4, 2, rng);
  ad::Var col = param(4, 1, rng);
  ad::Var col2 = param(4, 1, rng);
  std::vector<ad::Var*> ps{&a, &b, &col, &col2};

  CHECK(max_gradient_error([&] {
          const std::array<ad::Var, 2> parts{a, b};
          return reduce(ad::concat_cols(parts));
        },
                           ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::slice_cols(a, 1, 2)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] {
          const std::array<Eigen::Index, 5> rows{3, 0, 0, 2, 3};
          return reduce(ad::select_rows(a, rows));
        },
                           ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::row_sum(a)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::div_rows(a, ad::add_const(ad::exp(col), 1.0))); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::outer_sum(col, col2)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::pairwise_distance(a, 1e-3)); }, ps) < 1e-5);
}

TEST_CASE("masked softmax rows sum to one over the mask and differentiate correctly")
{
  Rng rng(3);
  ad::Var a = param(4, 4, rng);
  const BoolMatrix mask = odgn::testing::random_adjacency(4, 0.5, rng);
  const ad::Var s = ad::masked_row_softmax(a, mask);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(s.value().row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index j = 0; j < 4; ++j)
      if (!mask(i, j)) CHECK(s.value()(i, j) == 0.0);
  }
  std::vector<ad::Var*> ps{&a};
  CHECK(max_gradient_error([&] { return reduce(ad::masked_row_softmax(a, mask)); }, ps) < 1e-6);

  BoolMatrix empty = mask;
  empty.row(2).setConstant(false);
  CHECK_THROWS_AS(ad::masked_row_softmax(a, empty), std::domain_error);
}

TEST_CASE("sequence ops: stack_steps layout, shift_time causality, weight_norm")
{
  Rng rng(4);
  ad::Var s0 = param(2, 3, rng);
  ad::Var s1 = param(2, 3, rng);
  ad::Var s2 = param(2, 3, rng);
  const std::array<ad::Var, 3> steps{s0, s1, s2};
  const ad::Var seq = ad::stack_steps(steps);
  REQUIRE(seq.rows() == 6);
  CHECK(seq.value().row(0 * 3 + 1) == s1.value().row(0));
  CHECK(seq.value().row(1 * 3 + 2) == s2.value().row(1));

  const ad::Var sh = ad::shift_time(seq, 2, 3, 1);
  CHECK(sh.value().row(0).isZero());
  CHECK(sh.value().row(1) == seq.value().row(0));
  CHECK(sh.value().row(3).isZero());
  CHECK(sh.value().row(5) == seq.value().row(4));

  ad::Var v = param(3, 2, rng);
  ad::Var g = param(1, 2, rng);
  const ad::Var w = ad::weight_norm(v, g);
  for (Eigen::Index c = 0; c < 2; ++c)
    CHECK(w.value().col(c).norm() == doctest::Approx(std::abs(g.value()(0, c))).epsilon(1e-12));

  std::vector<ad::Var*> ps{&s0, &s1, &s2, &v, &g};
  CHECK(max_gradient_error([&] { return reduce(ad::shift_time(ad::stack_steps(steps), 2, 3, 2)); }, ps) < 1e-6);
  CHECK(max_gradient_error([&] { return reduce(ad::weight_norm(v, g)); }, ps) < 1e-6);

  ad::Var zero = ad::Var::parameter(Matrix::Zero(3, 2));
  CHECK(ad::weight_norm(zero, g).value().isZero());
}

TEST_CASE("straight_through forwards the hard value and backpropagates into the soft one")
{
  ad::Var soft = ad::Var::parameter(Matrix::Constant(1, 3, 0.2));
  Matrix hard(1, 3);
  hard << 0, 1, 0;
  const ad::Var st = ad::straight_through(hard, soft);
  CHECK(st.value() == hard);
  Matrix w(1, 3);
  w << 1, 2, 3;
  ad::backward(ad::sum(ad::mul_const(st, w)));
  CHECK(soft.grad() == w);
}

TEST_CASE("NoGradGuard builds no backward closures")
{
  ad::Var a = ad::Var::parameter(Matrix::Ones(2, 2));
  {
    ad::NoGradGuard guard;
    CHECK_FALSE(ad::grad_enabled());
    const ad::Var y = ad::sum(ad::mul(a, a));
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(ad::grad_enabled());
  const ad::Var y = ad::sum(ad::mul(a, a));
  CHECK(y.requires_grad());
}

TEST_CASE("frozen leaves receive no gradient")
{
  ad::Var a = ad::Var::parameter(Matrix::Ones(2, 2));
  ad::Var b = ad::Var::parameter(Matrix::Ones(2, 2));
  b.set_requires_grad(false);
  ad::backward(ad::sum(ad::mul(a, b)));
  CHECK(a.has_grad());
  CHECK_FALSE(b.has_grad());
}
