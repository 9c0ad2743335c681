#pragma once

#include "odgn/autograd.hpp"
#include "odgn/core.hpp"
#include "odgn/rng.hpp"

#include <vector>

namespace odgn {

inline constexpr std::size_t kDefaultWalkLength = 16;
inline constexpr std::size_t kDefaultWalksPerBatch = 128;
inline constexpr double kDefaultGumbelTemperature = 0.66;
inline constexpr std::size_t kMaxWalkRestarts = 50;

/// What a walk step emits besides the chosen node: the destination's attribute row
/// and the traversed flow scaled as log1p(flow) / flow_norm.
struct WalkContext {
  Matrix attributes;  // N x A, already scaled for the critic
  double flow_norm = 1.0;
};

/// log1p of the largest off-diagonal flow; the per-city flow-feature normalizer.
double flow_feature_norm(const ODNetwork& net);

/// One critic input: L rows of (attributes || scaled flow).
struct WalkSequence {
  Matrix steps;
  bool real = true;
};

/// A batch of B walks of length L. `features` uses the (B*L) x (A+1) sequence
/// layout (row b*L + t), and carries gradients for straight-through batches.
struct WalkBatch {
  std::size_t length = 0;
  bool real = true;
  std::vector<std::size_t> starts;
  std::vector<std::vector<std::size_t>> paths;  // destinations only; the start node is dropped
  Matrix edge_flows;                            // B x L raw flows of traversed edges
  ad::Var features;

  std::size_t size() const { return paths.size(); }
  WalkSequence sequence(std::size_t b) const;
};

/// Next-node distribution from region i: T_ij / sum_k T_ik over k != i; p_i = 0.
/// Throws DataError("absorbing node") when the off-diagonal out-flow is zero.
Vector transition_probs(const ODNetwork& net, std::size_t i);

/// Flow-proportional random walks on a fixed network. Starts are uniform over
/// nodes with positive out-flow; a walk that hits an absorbing node is restarted,
/// at most kMaxWalkRestarts times in total per batch.
WalkBatch sample_walks(const ODNetwork& net, const WalkContext& ctx, std::size_t n_walks, std::size_t length,
                       Rng& rng, bool real = true);

/// Straight-through Gumbel walks on generated flows. The forward pass is a hard
/// one-hot choice by Gumbel-max on log p + g; the backward pass uses the
/// temperature-tau softmax. Emitted flow is <choice, flow row>, emitted attributes
/// are <choice, attribute matrix>.
WalkBatch sample_walks_st(const ad::Var& flows, const WalkContext& ctx, std::size_t n_walks, std::size_t length,
                          double tau, Rng& rng);

}  // namespace odgn
