#pragma once

#include "odgn/autograd.hpp"
#include "odgn/core.hpp"

#include <vector>

namespace odgn {

inline constexpr double kMassFloor = 1e-6;      // added after softplus
inline constexpr double kLatentDistanceFloor = 1e-3;

struct RegionEmbedding {
  double mass = 1.0;
  Vector location;
};

/// The four scalars of the gravity law T_ij = G m_i^l1 m_j^l2 / r_ij^l3, with G = exp(log_g).
struct GravityParams {
  double log_g = 0.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 1.0;

  double g() const;
};

/// Learnable version of GravityParams for the generator.
struct GravityVars {
  ad::Var log_g;
  ad::Var lambda1;
  ad::Var lambda2;
  ad::Var lambda3;

  static GravityVars init(const GravityParams& p);
  GravityParams values() const;
  std::vector<ad::Var*> parameters();
};

/// Column 0 becomes the mass via softplus + kMassFloor; columns 1.. are the location.
std::vector<RegionEmbedding> split_embedding(const Matrix& embeddings);

/// Plain-value decoder. Diagonal is zero. Throws NumericError("gravity overflow") on
/// any non-finite entry.
ODNetwork predict_flows(const std::vector<RegionEmbedding>& embs, const GravityParams& params);

struct DecodedFlows {
  ad::Var mass;      // N x 1
  ad::Var location;  // N x (d-1)
  ad::Var flows;     // N x N, zero diagonal
};

/// Differentiable decoder from N x d embeddings.
DecodedFlows decode_flows(const ad::Var& embeddings, const GravityVars& params);

/// Same law evaluated on explicit masses and latent locations (differentiable in all inputs).
ad::Var gravity_flows(const ad::Var& mass, const ad::Var& location, const GravityVars& params);

struct GravityFit {
  GravityParams params;
  double rms_residual = 0.0;   // log-space
  double max_residual = 0.0;   // log-space
  std::size_t pairs = 0;
};

/// One observation row for pooled log-space fitting.
struct GravityObservation {
  double flow;
  double mass_origin;
  double mass_dest;
  double distance;
};

/// Ordinary least squares of log T on (1, log m_i, log m_j, -log r). Only positive
/// flows enter. A regressor with zero variance is pinned at exponent 0 so the intercept
/// carries its effect. Throws NumericError for a singular remaining design.
GravityFit fit_gravity_logspace(const std::vector<GravityObservation>& obs);

/// Convenience wrapper over one OD matrix, a mass per region and a distance matrix.
GravityFit fit_decoder_logspace(const ODNetwork& flows, const Vector& masses, const Matrix& distances);

}  // namespace odgn
