#pragma once

#include "odgn/core.hpp"
#include "odgn/gravity.hpp"

#include <vector>

namespace odgn {

/// Common part of commuters over off-diagonal cells: 2 sum min(T, T') / (sum T + sum T').
double cpc(const ODNetwork& real, const ODNetwork& fake);

/// Root mean squared off-diagonal difference, averaged over N(N-1) cells.
double rmse(const ODNetwork& real, const ODNetwork& fake);

enum class JsdMode {
  /// sqrt((KL(P_fake || M) + KL(M || P_real)) / 2), the form printed with the metric.
  Verbatim,
  /// Textbook sqrt((KL(P_fake || M) + KL(P_real || M)) / 2).
  Standard,
};

struct JsdResult {
  double value = 0.0;  // +inf when `infinite`
  bool infinite = false;
};

/// Natural-log KL with 0 log(0/q) = 0; returns +inf if p > 0 where q = 0.
double kl_divergence(const Vector& p, const Vector& q);

JsdResult f_jsd(const ODNetwork& real, const ODNetwork& fake, JsdMode mode = JsdMode::Verbatim);

struct Evaluation {
  double cpc = 0.0;
  double rmse = 0.0;
  JsdResult f_jsd;
  std::size_t n_regions = 0;
  JsdMode mode = JsdMode::Verbatim;
};

Evaluation evaluate(const ODNetwork& real, const ODNetwork& fake, JsdMode mode = JsdMode::Verbatim);

double pearson(const Vector& a, const Vector& b);

/// Pearson r between learned masses and `reference`, skipping regions whose
/// `population` is zero (pass the reference itself when it is the population).
double mass_correlation(const std::vector<RegionEmbedding>& embs, const Vector& reference, const Vector& population);
double mass_correlation(const std::vector<RegionEmbedding>& embs, const Vector& reference);

}  // namespace odgn
