#include "odgn/baselines.hpp"

#include "odgn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace odgn {

namespace {

constexpr double kEarthRadiusKm = 6371.0088;

void require_od(const std::vector<City>& cities)
{
  if (cities.empty()) throw UsageError("baseline needs at least one training city");
  for (const auto& c : cities)
    if (!c.od) throw DataError("training city " + c.name + " has no od.csv");
}

}  // namespace

double haversine_km(double lon1, double lat1, double lon2, double lat2)
{
  const double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double a = std::pow(std::sin(dlat / 2), 2) + std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::pow(std::sin(dlon / 2), 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

Matrix geographic_distances(const City& city, double floor_km)
{
  const std::size_t n = city.size();
  Matrix d = Matrix::Constant(n, n, floor_km);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = city.regions[i];
      const auto& b = city.regions[j];
      d(i, j) = d(j, i) = std::max(haversine_km(a.lon, a.lat, b.lon, b.lat), floor_km);
    }
  return d;
}

Vector city_populations(const City& city)
{
  if (city.attr_dim() == 0) throw DataError("city " + city.name + " has no population attribute");
  Vector p(city.size());
  for (std::size_t i = 0; i < city.size(); ++i) p(i) = city.regions[i].attributes[0];
  return p;
}

GravityFit gravity_baseline_fit(const std::vector<City>& cities)
{
  require_od(cities);
  std::vector<GravityObservation> obs;
  for (const auto& c : cities) {
    const Vector pop = city_populations(c);
    const Matrix dist = geographic_distances(c);
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j) {
        const double t = (*c.od)(i, j);
        if (i == j || !(t > 0.0)) continue;
        if (!(pop(i) > 0.0) || !(pop(j) > 0.0)) continue;
        obs.push_back({t, pop(i), pop(j), dist(i, j)});
      }
  }
  if (obs.size() < 5)
    throw DataError("gravity baseline needs at least 5 positive flow pairs, found " + std::to_string(obs.size()));
  return fit_gravity_logspace(obs);
}

ODNetwork gravity_baseline_predict(const City& city, const GravityParams& params)
{
  const Vector pop = city_populations(city);
  const Matrix dist = geographic_distances(city);
  const std::size_t n = city.size();
  Matrix t = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || !(pop(i) > 0.0) || !(pop(j) > 0.0)) continue;
      const double v = std::exp(params.log_g + params.lambda1 * std::log(pop(i)) + params.lambda2 * std::log(pop(j)) -
                                params.lambda3 * std::log(dist(i, j)));
      if (!std::isfinite(v)) throw NumericError("gravity overflow");
      t(i, j) = v;
    }
  return ODNetwork(std::move(t));
}

DeepGravityParams DeepGravityParams::init(const DeepGravityConfig& cfg, Eigen::Index attr_dim, std::uint64_t seed)
{
  if (cfg.width < 1) throw UsageError("deep gravity width must be positive");
  Rng rng(seed);
  DeepGravityParams p;
  p.config = cfg;
  Eigen::Index in = 2 * attr_dim + 1;
  for (std::size_t l = 0; l <= cfg.hidden_layers; ++l) {
    const Eigen::Index out = l == cfg.hidden_layers ? 1 : cfg.width;
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    p.weights.push_back(ad::Var::parameter(rng.normal_matrix(in, out, sd)));
    p.biases.push_back(ad::Var::parameter(Matrix::Zero(1, out)));
    in = out;
  }
  return p;
}

ParamList DeepGravityParams::parameters()
{
  ParamList out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

Matrix deep_gravity_inputs(const City& city, const DeepGravityParams& params)
{
  const Matrix x = params.scaler.transform(city.attribute_matrix());
  const Matrix dist = geographic_distances(city);
  const Eigen::Index n = x.rows();
  const Eigen::Index a = x.cols();
  Matrix in(n * (n - 1), 2 * a + 1);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      in.row(r).head(a) = x.row(i);
      in.row(r).segment(a, a) = x.row(j);
      in(r, 2 * a) = (std::log(dist(i, j)) - params.log_distance_mean) / params.log_distance_scale;
      ++r;
    }
  return in;
}

ad::Var deep_gravity_forward(const ad::Var& inputs, const DeepGravityParams& params)
{
  if (params.weights.empty()) throw UsageError("deep gravity model has no layers");
  if (inputs.cols() != params.weights.front().rows())
    throw DataError("deep gravity input width " + std::to_string(inputs.cols()) + " does not match model " +
                    std::to_string(params.weights.front().rows()));
  ad::Var h = inputs;
  const std::size_t last = params.weights.size() - 1;
  for (std::size_t l = 0; l < last; ++l)
    h = ad::leaky_relu(ad::add_row(ad::matmul(h, params.weights[l]), params.biases[l]), params.config.leaky_slope);
  return ad::softplus(ad::add_row(ad::matmul(h, params.weights[last]), params.biases[last]));
}

DeepGravityParams deep_gravity_fit(const std::vector<City>& cities, const DeepGravityConfig& cfg)
{
  require_od(cities);
  std::vector<Matrix> attrs;
  for (const auto& c : cities) attrs.push_back(c.attribute_matrix());
  DeepGravityParams p = DeepGravityParams::init(cfg, static_cast<Eigen::Index>(cities.front().attr_dim()), cfg.seed);
  p.scaler = FeatureScaler::fit(attrs);

  std::vector<double> log_d;
  for (const auto& c : cities) {
    const Matrix d = geographic_distances(c);
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      for (Eigen::Index j = 0; j < d.cols(); ++j)
        if (i != j) log_d.push_back(std::log(d(i, j)));
  }
  const double mu = std::accumulate(log_d.begin(), log_d.end(), 0.0) / static_cast<double>(log_d.size());
  double var = 0.0;
  for (double v : log_d) var += (v - mu) * (v - mu);
  p.log_distance_mean = mu;
  p.log_distance_scale = std::max(std::sqrt(var / static_cast<double>(log_d.size())), 1e-12);

  std::vector<Matrix> xs;
  std::vector<double> ys;
  for (const auto& c : cities) {
    xs.push_back(deep_gravity_inputs(c, p));
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = 0; j < c.size(); ++j)
        if (i != j) ys.push_back(std::log1p((*c.od)(i, j)));
  }
  Eigen::Index rows = 0;
  for (const auto& x : xs) rows += x.rows();
  Matrix x_all(rows, xs.front().cols());
  rows = 0;
  for (const auto& x : xs) {
    x_all.middleRows(rows, x.rows()) = x;
    rows += x.rows();
  }

  Rng rng(cfg.seed + 1);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x_all.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Adam opt;
  opt.lr = cfg.lr;
  const ParamList params = p.parameters();
  const std::size_t batch = std::max<std::size_t>(cfg.batch_size, 1);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.index(k)]);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const auto m = static_cast<Eigen::Index>(end - start);
      Matrix xb(m, x_all.cols());
      Matrix yb(m, 1);
      for (Eigen::Index r = 0; r < m; ++r) {
        const Eigen::Index src = order[start + static_cast<std::size_t>(r)];
        xb.row(r) = x_all.row(src);
        yb(r, 0) = ys[static_cast<std::size_t>(src)];
      }
      zero_grad(params);
      const ad::Var pred = ad::log1p(deep_gravity_forward(ad::Var::constant(std::move(xb)), p));
      const ad::Var diff = ad::add_const(pred, Matrix(-yb));
      const ad::Var loss = ad::mean(ad::mul(diff, diff));
      if (!std::isfinite(loss.item())) throw NumericError("deep gravity training diverged");
      ad::backward(loss);
      opt.step(params);
    }
  }
  p.trained = true;
  return p;
}

ODNetwork deep_gravity_predict(const City& city, const DeepGravityParams& params)
{
  if (!params.trained) throw UsageError("deep gravity model is untrained");
  ad::NoGradGuard no_grad;
  const Matrix pred = deep_gravity_forward(ad::Var::constant(deep_gravity_inputs(city, params)), params).value();
  const std::size_t n = city.size();
  Matrix t = Matrix::Zero(n, n);
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) t(i, j) = pred(r++, 0);
  if (!t.allFinite()) throw NumericError("deep gravity produced non-finite flows");
  return ODNetwork(std::move(t));
}

}  // namespace odgn
