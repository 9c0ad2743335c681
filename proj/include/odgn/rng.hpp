#pragma once

#include "odgn/core.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace odgn {

/// Seeded generator whose complete state is the engine state, so it can be
/// checkpointed and restored exactly. No distribution object keeps cached
/// values between calls.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform_open();  // (0, 1)
  double normal();
  double gumbel();
  std::size_t index(std::size_t n);  // uniform in [0, n)
  std::uint64_t poisson(double mean);
  std::uint64_t next_u64() { return engine_(); }

  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

  std::string state() const;
  void set_state(const std::string& s);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace odgn
