#include "odgn/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace odgn {

double Rng::uniform()
{
  // 53 random bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open()
{
  double u = 0.0;
  do {
    u = uniform();
  } while (u == 0.0);
  return u;
}

double Rng::normal()
{
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::gumbel() { return -std::log(-std::log(uniform_open())); }

std::size_t Rng::index(std::size_t n)
{
  if (n == 0) throw std::invalid_argument("Rng::index: empty range");
  return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::uint64_t Rng::poisson(double mean)
{
  if (!(mean >= 0.0)) throw std::invalid_argument("Rng::poisson: negative mean");
  if (mean == 0.0) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(engine_);
}

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev)
{
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * normal();
  return m;
}

std::string Rng::state() const
{
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s)
{
  std::istringstream is(s);
  is >> engine_;
  if (!is) throw DataError("corrupt RNG state");
}

}  // namespace odgn
