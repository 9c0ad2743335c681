#pragma once

#include "odgn/autograd.hpp"
#include "odgn/rng.hpp"

#include <optional>
#include <vector>

namespace odgn {

struct TcnConfig {
  Eigen::Index input_dim = 61;
  Eigen::Index channels = 64;
  Eigen::Index kernel = 3;
  std::vector<Eigen::Index> dilations{1, 2, 4, 8};

  /// 1 + 2 (kernel - 1) sum(dilations): two causal convolutions per block.
  Eigen::Index receptive_field() const;
};

/// Weight-normalized causal convolution. `direction` is (kernel * in) x out with
/// tap-major rows: rows [s*in, (s+1)*in) act on step t - (kernel-1-s)*dilation.
struct CausalConv {
  ad::Var direction;
  ad::Var gain;  // 1 x out
  ad::Var bias;  // 1 x out
  Eigen::Index kernel = 1;
  Eigen::Index dilation = 1;
};

struct TcnBlock {
  CausalConv conv1;
  CausalConv conv2;
  std::optional<ad::Var> skip_weight;  // 1x1 projection when channel counts differ
  std::optional<ad::Var> skip_bias;
};

struct TcnParams {
  TcnConfig config;
  std::vector<TcnBlock> blocks;
  ad::Var fc_weight;  // channels x 1
  ad::Var fc_bias;    // 1 x 1

  static TcnParams init(const TcnConfig& cfg, Rng& rng);
  std::vector<ad::Var*> parameters();
};

ad::Var causal_conv(const ad::Var& x, Eigen::Index batch, Eigen::Index length, const CausalConv& conv);

/// Output of the dilated residual stack, (B*L) x channels in the sequence layout.
ad::Var tcn_hidden(const ad::Var& sequences, Eigen::Index batch, Eigen::Index length, const TcnParams& params);

/// Critic scores, B x 1: affine readout of the last step's hidden state, no output nonlinearity.
ad::Var score(const ad::Var& sequences, Eigen::Index batch, Eigen::Index length, const TcnParams& params);

}  // namespace odgn
