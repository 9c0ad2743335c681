#pragma once

#include "odgn/autograd.hpp"
#include "odgn/core.hpp"
#include "odgn/gravity.hpp"
#include "odgn/mgat.hpp"
#include "odgn/optim.hpp"

#include <cstdint>
#include <vector>

namespace odgn {

inline constexpr double kGeoDistanceFloorKm = 0.1;

/// Great-circle distance in km between two lon/lat points given in degrees.
double haversine_km(double lon1, double lat1, double lon2, double lat2);

/// Pairwise haversine distances, clamped below at `floor_km`. Diagonal is floor_km.
Matrix geographic_distances(const City& city, double floor_km = kGeoDistanceFloorKm);

/// Attribute 0 of every region, the population proxy.
Vector city_populations(const City& city);

/// Pooled log-space OLS of the classic gravity law over every training city.
/// Throws DataError with fewer than 5 positive off-diagonal pairs.
GravityFit gravity_baseline_fit(const std::vector<City>& cities);

ODNetwork gravity_baseline_predict(const City& city, const GravityParams& params);

struct DeepGravityConfig {
  std::size_t hidden_layers = 15;
  Eigen::Index width = 64;
  double leaky_slope = 0.01;
  std::size_t epochs = 40;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Feed-forward regressor on (x_i || x_j || log distance) with a softplus output.
struct DeepGravityParams {
  DeepGravityConfig config;
  std::vector<ad::Var> weights;  // hidden_layers + 1 matrices
  std::vector<ad::Var> biases;
  FeatureScaler scaler;
  double log_distance_mean = 0.0;
  double log_distance_scale = 1.0;
  bool trained = false;

  static DeepGravityParams init(const DeepGravityConfig& cfg, Eigen::Index attr_dim, std::uint64_t seed);
  ParamList parameters();
};

/// Pairwise input rows for every ordered off-diagonal pair (i, j), in row-major pair order.
Matrix deep_gravity_inputs(const City& city, const DeepGravityParams& params);

/// Forward pass on input rows; returns non-negative flows, one per row.
ad::Var deep_gravity_forward(const ad::Var& inputs, const DeepGravityParams& params);

/// Adam on mean (log1p(pred) - log1p(true))^2 over all training pairs.
DeepGravityParams deep_gravity_fit(const std::vector<City>& cities, const DeepGravityConfig& cfg = {});

/// Throws UsageError when `params` were never trained.
ODNetwork deep_gravity_predict(const City& city, const DeepGravityParams& params);

}  // namespace odgn
