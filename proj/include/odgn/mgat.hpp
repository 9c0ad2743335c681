#pragma once

#include "odgn/autograd.hpp"
#include "odgn/core.hpp"
#include "odgn/rng.hpp"

#include <array>
#include <vector>

namespace odgn {

/// One multi-head GAT layer. Head k owns a projection W^k (in_dim x head_dim) and an
/// attention vector stored as a head_dim x 2 matrix: column 0 scores the centre node,
/// column 1 the neighbour.
struct GatLayerParams {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> attention;

  std::size_t heads() const { return weights.size(); }
  Eigen::Index in_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  Eigen::Index head_dim() const { return weights.empty() ? 0 : weights.front().cols(); }

  static GatLayerParams init(Eigen::Index in_dim, Eigen::Index head_dim, std::size_t heads, Rng& rng);
};

inline constexpr double kLeakySlope = 0.2;

struct GatOutput {
  ad::Var features;                 // N x (K * head_dim)
  std::vector<ad::Var> attention;   // K matrices, N x N, rows sum to 1 over the neighbourhood
};

/// Multi-head graph attention. Row i of the output concatenates, over heads,
/// act(sum_j alpha_ij W^k h_j) where alpha_i. is the masked softmax of
/// LeakyReLU(theta . [W h_i || W h_j]) over j with adj(i, j). `activate` selects ELU vs identity.
GatOutput gat_layer_full(const ad::Var& h, const BoolMatrix& adj, const GatLayerParams& params, bool activate = true);

inline ad::Var gat_layer(const ad::Var& h, const BoolMatrix& adj, const GatLayerParams& params, bool activate = true)
{
  return gat_layer_full(h, adj, params, activate).features;
}

/// Per-column standardization of signed-log attributes, fitted on training cities.
struct FeatureScaler {
  Vector mean;
  Vector scale;

  static FeatureScaler fit(const std::vector<Matrix>& attribute_matrices);
  Matrix transform(const Matrix& attributes) const;
  bool fitted() const { return mean.size() > 0; }
};

struct MgatConfig {
  Eigen::Index attr_dim = 60;
  Eigen::Index noise_dim = 60;
  Eigen::Index embed_dim = 64;
  std::size_t heads = 8;
  std::size_t layers = 3;
};

enum class View : std::size_t { Ngb = 0, Bus = 1, Rail = 2 };

struct MgatParams {
  MgatConfig config;
  std::array<std::vector<GatLayerParams>, 3> stacks;  // indexed by View
  ad::Var fuse;                                      // 3d x d
  FeatureScaler scaler;

  static MgatParams init(const MgatConfig& cfg, Rng& rng);
  std::vector<ad::Var*> parameters();
};

/// Encodes preprocessed (scaled) attributes plus noise into N x d embeddings.
ad::Var encode(const Matrix& scaled_attributes, const TransportGraphSet& transport, const Matrix& noise,
               const MgatParams& params);

/// Applies params.scaler (identity if unfitted) to the city's attributes before encoding.
ad::Var encode(const City& city, const Matrix& noise, const MgatParams& params);

}  // namespace odgn
