#include "odgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace odgn {

namespace {

void check_shapes(const ODNetwork& a, const ODNetwork& b)
{
  if (a.size() != b.size())
    throw DataError("OD networks differ in size: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
}

}  // namespace

double cpc(const ODNetwork& real, const ODNetwork& fake)
{
  check_shapes(real, fake);
  double common = 0.0;
  for (std::size_t i = 0; i < real.size(); ++i)
    for (std::size_t j = 0; j < real.size(); ++j)
      if (i != j) common += std::min(real(i, j), fake(i, j));
  const double denom = real.total_off_diagonal() + fake.total_off_diagonal();
  if (!(denom > 0.0)) throw DataError("cpc undefined: both networks are empty");
  return 2.0 * common / denom;
}

double rmse(const ODNetwork& real, const ODNetwork& fake)
{
  check_shapes(real, fake);
  const std::size_t n = real.size();
  if (n < 2) throw DataError("rmse needs at least two regions");
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        const double d = real(i, j) - fake(i, j);
        ss += d * d;
      }
  return std::sqrt(ss / static_cast<double>(n * (n - 1)));
}

double kl_divergence(const Vector& p, const Vector& q)
{
  double kl = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k) {
    if (p(k) <= 0.0) continue;
    if (q(k) <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p(k) * std::log(p(k) / q(k));
  }
  return kl;
}

JsdResult f_jsd(const ODNetwork& real, const ODNetwork& fake, JsdMode mode)
{
  check_shapes(real, fake);
  const Vector pr = flow_distribution(real);
  const Vector pf = flow_distribution(fake);
  const Vector pm = 0.5 * (pr + pf);
  const double first = kl_divergence(pf, pm);
  const double second = mode == JsdMode::Verbatim ? kl_divergence(pm, pr) : kl_divergence(pr, pm);
  if (std::isinf(first) || std::isinf(second)) return {std::numeric_limits<double>::infinity(), true};
  return {std::sqrt(std::max(0.0, 0.5 * (first + second))), false};
}

Evaluation evaluate(const ODNetwork& real, const ODNetwork& fake, JsdMode mode)
{
  Evaluation e;
  e.cpc = cpc(real, fake);
  e.rmse = rmse(real, fake);
  e.f_jsd = f_jsd(real, fake, mode);
  e.n_regions = real.size();
  e.mode = mode;
  return e;
}

double pearson(const Vector& a, const Vector& b)
{
  if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
  if (a.size() < 3) throw DataError("correlation needs at least 3 values");
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double na = da.norm();
  const double nb = db.norm();
  if (na <= 1e-300 || nb <= 1e-300) throw DataError("correlation undefined for constant input");
  return std::clamp(da.dot(db) / (na * nb), -1.0, 1.0);
}

double mass_correlation(const std::vector<RegionEmbedding>& embs, const Vector& reference, const Vector& population)
{
  const auto n = static_cast<Eigen::Index>(embs.size());
  if (reference.size() != n || population.size() != n) throw std::invalid_argument("mass_correlation: size mismatch");
  std::vector<double> m;
  std::vector<double> r;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (population(i) == 0.0) continue;
    m.push_back(embs[static_cast<std::size_t>(i)].mass);
    r.push_back(reference(i));
  }
  return pearson(Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size())),
                 Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
}

double mass_correlation(const std::vector<RegionEmbedding>& embs, const Vector& reference)
{
  return mass_correlation(embs, reference, reference);
}

}  // namespace odgn
