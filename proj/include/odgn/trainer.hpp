#pragma once

#include "odgn/critic.hpp"
#include "odgn/gravity.hpp"
#include "odgn/mgat.hpp"
#include "odgn/optim.hpp"
#include "odgn/rng.hpp"
#include "odgn/walker.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace odgn {

struct TrainConfig {
  // Adversarial schedule.
  std::size_t iterations = 200;
  std::size_t n_critic_early = 5;
  std::size_t n_critic_late = 1;
  std::size_t n_critic_switch_epoch = 300;
  double clip = 0.01;
  double lr_generator = 5e-5;
  double lr_critic = 5e-5;
  std::size_t batch_walks = kDefaultWalksPerBatch;
  std::size_t walk_length = kDefaultWalkLength;
  double tau = kDefaultGumbelTemperature;
  std::uint64_t seed = 0;

  // Stopping and bookkeeping.
  std::size_t convergence_window = 100;
  double convergence_tol = 0.0;  // 0 disables the convergence stop
  std::size_t max_consecutive_skips = 100;
  std::string checkpoint_path;
  std::size_t checkpoint_interval = 0;

  // Model shape.
  Eigen::Index noise_dim = 60;
  Eigen::Index embed_dim = 64;
  std::size_t heads = 8;
  std::size_t gat_layers = 3;
  Eigen::Index tcn_channels = 64;
  Eigen::Index tcn_kernel = 3;
  std::size_t tcn_levels = 4;

  // Initial gravity scalars; with calibrate_scale, log_g is then shifted so the
  // initial generator matches the mean training flow.
  GravityParams gravity_init{};
  bool calibrate_scale = true;

  void validate() const;
};

/// Epoch = one pass over the training-city list, counted in generator iterations.
std::size_t epoch_of_iteration(std::size_t iteration, std::size_t n_cities);
std::size_t n_critic_for_epoch(const TrainConfig& cfg, std::size_t epoch);

struct Generator {
  MgatParams mgat;
  GravityVars gravity;

  ParamList parameters();
};

/// A city paired with everything the training loop derives from it once.
struct PreparedCity {
  const City* city = nullptr;
  Matrix scaled_attributes;
  WalkContext walk;
};

std::vector<PreparedCity> prepare_cities(const std::vector<City>& cities, const FeatureScaler& scaler);

struct LossRecord {
  std::size_t iter = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double wall_ms = 0.0;
};

struct MetricSnapshot {
  std::size_t iter = 0;
  double mean_cpc = 0.0;
  double mean_rmse = 0.0;
};

struct TrainState {
  TrainConfig config;
  Generator generator;
  TcnParams critic;
  RmsProp opt_generator;
  RmsProp opt_critic;
  std::size_t iteration = 0;
  Rng rng;
  std::vector<LossRecord> history;
  std::vector<MetricSnapshot> snapshots;
  std::size_t consecutive_skips = 0;
  std::size_t total_skips = 0;

  /// Fresh model for cities with `attr_dim` attributes; draws all initial weights from cfg.seed.
  static TrainState init(const TrainConfig& cfg, std::size_t attr_dim, const FeatureScaler& scaler);
};

struct StepResult {
  double loss = 0.0;
  bool skipped = false;
  std::size_t city = 0;
};

/// Generator forward pass for one city and one noise draw.
DecodedFlows generate_flows(const Generator& gen, const PreparedCity& city, const Matrix& noise);

/// One plain OD sample and its region embeddings for `city`.
struct GeneratedSample {
  ODNetwork od;
  std::vector<RegionEmbedding> embeddings;
};
GeneratedSample generate_sample(const Generator& gen, const City& city, Rng& rng);

/// Critic update: loss = mean D(S_fake) - mean D(S_real), RMSProp step, then clip to [-c, c].
StepResult critic_step(TrainState& state, const std::vector<PreparedCity>& cities);

/// Generator update: loss = -mean D(S_fake) over straight-through walks; critic untouched.
StepResult generator_step(TrainState& state, const std::vector<PreparedCity>& cities);

/// Shifts log_g so the no-grad generator output matches the mean real off-diagonal flow.
void calibrate_gravity_scale(TrainState& state, const std::vector<PreparedCity>& cities);

using IterationCallback = std::function<void(const TrainState&, const LossRecord&)>;

/// Runs the adversarial loop until cfg.iterations or convergence. Resumes from
/// `state` as given (use TrainState::init for a fresh run).
void train(TrainState& state, const std::vector<City>& cities, const IterationCallback& on_iteration = {});

/// Convenience: fits the scaler, initializes, calibrates and trains.
TrainState train(const std::vector<City>& cities, const TrainConfig& cfg, const IterationCallback& on_iteration = {});

// Checkpoints: binary blob with every parameter, optimizer moments, RNG state and
// history; a JSON sidecar `<path>.json` mirrors iteration, config, losses and snapshots.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path);

}  // namespace odgn
