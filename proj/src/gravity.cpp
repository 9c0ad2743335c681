#include "odgn/gravity.hpp"

#include <cmath>
#include <stdexcept>

namespace odgn {

namespace {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

ad::Var scalar_param(double v) { return ad::Var::parameter(Matrix::Constant(1, 1, v)); }

}  // namespace

double GravityParams::g() const { return std::exp(log_g); }

GravityVars GravityVars::init(const GravityParams& p)
{
  return {scalar_param(p.log_g), scalar_param(p.lambda1), scalar_param(p.lambda2), scalar_param(p.lambda3)};
}

GravityParams GravityVars::values() const
{
  return {log_g.item(), lambda1.item(), lambda2.item(), lambda3.item()};
}

std::vector<ad::Var*> GravityVars::parameters() { return {&log_g, &lambda1, &lambda2, &lambda3}; }

std::vector<RegionEmbedding> split_embedding(const Matrix& embeddings)
{
  if (embeddings.cols() < 2) throw std::invalid_argument("split_embedding: embedding needs at least 2 dims");
  std::vector<RegionEmbedding> out(static_cast<std::size_t>(embeddings.rows()));
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    auto& e = out[static_cast<std::size_t>(i)];
    e.mass = softplus(embeddings(i, 0)) + kMassFloor;
    e.location = embeddings.row(i).tail(embeddings.cols() - 1).transpose();
  }
  return out;
}

ODNetwork predict_flows(const std::vector<RegionEmbedding>& embs, const GravityParams& params)
{
  const std::size_t n = embs.size();
  Matrix t = Matrix::Zero(n, n);
  const double g = params.g();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(embs[i].mass > 0.0)) throw std::domain_error("predict_flows: non-positive mass");
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = std::max((embs[i].location - embs[j].location).norm(), kLatentDistanceFloor);
      const double v = g * std::pow(embs[i].mass, params.lambda1) * std::pow(embs[j].mass, params.lambda2) /
                       std::pow(r, params.lambda3);
      if (!std::isfinite(v)) throw NumericError("gravity overflow");
      t(i, j) = v;
    }
  }
  return ODNetwork(std::move(t));
}

ad::Var gravity_flows(const ad::Var& mass, const ad::Var& location, const GravityVars& params)
{
  const Eigen::Index n = mass.rows();
  ad::Var log_m = ad::log(mass);
  ad::Var log_r = ad::log(ad::pairwise_distance(location, kLatentDistanceFloor));
  ad::Var attraction = ad::outer_sum(ad::scalar_mul(params.lambda1, log_m), ad::scalar_mul(params.lambda2, log_m));
  ad::Var log_t = ad::scalar_add(params.log_g, ad::sub(attraction, ad::scalar_mul(params.lambda3, log_r)));
  ad::Var flows = ad::mul_const(ad::exp(log_t), off_diagonal_mask(static_cast<std::size_t>(n)));
  if (!flows.value().allFinite()) throw NumericError("gravity overflow");
  return flows;
}

DecodedFlows decode_flows(const ad::Var& embeddings, const GravityVars& params)
{
  if (embeddings.cols() < 2) throw std::invalid_argument("decode_flows: embedding needs at least 2 dims");
  DecodedFlows d;
  d.mass = ad::add_const(ad::softplus(ad::slice_cols(embeddings, 0, 1)), kMassFloor);
  d.location = ad::slice_cols(embeddings, 1, embeddings.cols() - 1);
  d.flows = gravity_flows(d.mass, d.location, params);
  return d;
}

GravityFit fit_gravity_logspace(const std::vector<GravityObservation>& obs)
{
  std::vector<const GravityObservation*> used;
  for (const auto& o : obs) {
    if (!(o.mass_origin > 0.0) || !(o.mass_dest > 0.0) || !(o.distance > 0.0))
      throw std::domain_error("fit_gravity_logspace: masses and distances must be positive");
    if (o.flow > 0.0) used.push_back(&o);
  }
  const auto m = static_cast<Eigen::Index>(used.size());
  Matrix x(m, 3);
  Vector y(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto& o = *used[static_cast<std::size_t>(r)];
    x(r, 0) = std::log(o.mass_origin);
    x(r, 1) = std::log(o.mass_dest);
    x(r, 2) = -std::log(o.distance);
    y(r) = std::log(o.flow);
  }

  // Regressors without variance cannot be told apart from the intercept.
  std::vector<Eigen::Index> active;
  for (Eigen::Index c = 0; c < 3; ++c) {
    if (m == 0) break;
    const double mu = x.col(c).mean();
    const double spread = (x.col(c).array() - mu).abs().maxCoeff();
    if (spread > 1e-12 * std::max(1.0, std::abs(mu))) active.push_back(c);
  }
  const auto k = static_cast<Eigen::Index>(active.size()) + 1;
  if (m < k) throw NumericError("singular design matrix: " + std::to_string(m) + " positive pairs for " +
                                std::to_string(k) + " coefficients");
  Matrix design(m, k);
  design.col(0).setOnes();
  for (Eigen::Index c = 0; c < k - 1; ++c) design.col(c + 1) = x.col(active[static_cast<std::size_t>(c)]);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw NumericError("singular design matrix in gravity fit");
  const Eigen::VectorXd beta = qr.solve(Eigen::VectorXd(y));

  GravityFit fit;
  double coef[3] = {0.0, 0.0, 0.0};
  for (Eigen::Index c = 0; c < k - 1; ++c) coef[active[static_cast<std::size_t>(c)]] = beta(c + 1);
  fit.params = {beta(0), coef[0], coef[1], coef[2]};
  const Eigen::VectorXd resid = Eigen::VectorXd(y) - design * beta;
  fit.rms_residual = std::sqrt(resid.squaredNorm() / static_cast<double>(m));
  fit.max_residual = resid.cwiseAbs().maxCoeff();
  fit.pairs = used.size();
  return fit;
}

GravityFit fit_decoder_logspace(const ODNetwork& flows, const Vector& masses, const Matrix& distances)
{
  const auto n = static_cast<Eigen::Index>(flows.size());
  if (masses.size() != n || distances.rows() != n || distances.cols() != n)
    throw std::invalid_argument("fit_decoder_logspace: size mismatch");
  std::vector<GravityObservation> obs;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j) obs.push_back({flows.flows()(i, j), masses(i), masses(j), distances(i, j)});
  return fit_gravity_logspace(obs);
}

}  // namespace odgn
