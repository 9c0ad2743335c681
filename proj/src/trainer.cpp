#include "odgn/trainer.hpp"

#include "odgn/config.hpp"
#include "odgn/metrics.hpp"

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/array.hpp>
#include <cereal/types/map.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>
#include <json.hpp>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace odgn {

namespace {

constexpr const char* kCheckpointMagic = "odgn-checkpoint";
constexpr std::uint32_t kCheckpointVersion = 1;

struct MatrixBlob {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  template <class Archive>
  void serialize(Archive& ar)
  {
    ar(rows, cols, data);
  }
};

MatrixBlob to_blob(const Matrix& m)
{
  return {m.rows(), m.cols(), std::vector<double>(m.data(), m.data() + m.size())};
}

Matrix from_blob(const MatrixBlob& b)
{
  if (b.rows < 0 || b.cols < 0 || static_cast<std::size_t>(b.rows * b.cols) != b.data.size())
    throw DataError("corrupt checkpoint matrix");
  Matrix m(b.rows, b.cols);
  std::copy(b.data.begin(), b.data.end(), m.data());
  return m;
}

std::vector<MatrixBlob> to_blobs(const std::vector<Matrix>& ms)
{
  std::vector<MatrixBlob> out;
  out.reserve(ms.size());
  for (const auto& m : ms) out.push_back(to_blob(m));
  return out;
}

std::vector<Matrix> from_blobs(const std::vector<MatrixBlob>& bs)
{
  std::vector<Matrix> out;
  out.reserve(bs.size());
  for (const auto& b : bs) out.push_back(from_blob(b));
  return out;
}

struct CheckpointBlob {
  std::string magic;
  std::uint32_t version = 0;
  std::uint64_t attr_dim = 0;
  std::map<std::string, std::string> config;
  MatrixBlob scaler_mean;
  MatrixBlob scaler_scale;
  std::vector<MatrixBlob> generator;
  std::vector<MatrixBlob> critic;
  std::vector<MatrixBlob> opt_generator;
  std::vector<MatrixBlob> opt_critic;
  std::uint64_t iteration = 0;
  std::string rng;
  std::vector<std::array<double, 4>> history;
  std::vector<std::array<double, 3>> snapshots;
  std::uint64_t consecutive_skips = 0;
  std::uint64_t total_skips = 0;

  template <class Archive>
  void serialize(Archive& ar)
  {
    ar(magic, version, attr_dim, config, scaler_mean, scaler_scale, generator, critic, opt_generator, opt_critic,
       iteration, rng, history, snapshots, consecutive_skips, total_skips);
  }
};

std::vector<Matrix> values_of(const ParamList& params)
{
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const auto* p : params) out.push_back(p->value());
  return out;
}

void assign_values(const ParamList& params, const std::vector<MatrixBlob>& blobs, const char* what)
{
  if (blobs.size() != params.size())
    throw DataError(std::string("checkpoint ") + what + " has " + std::to_string(blobs.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix m = from_blob(blobs[k]);
    if (m.rows() != params[k]->rows() || m.cols() != params[k]->cols())
      throw DataError(std::string("checkpoint ") + what + " tensor " + std::to_string(k) + " has the wrong shape");
    params[k]->mutable_value() = std::move(m);
  }
}

Matrix column_matrix(const Vector& v) { return Matrix(Eigen::Map<const Matrix>(v.data(), v.size(), 1)); }

Vector to_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

/// Freezes a parameter set for the lifetime of the guard.
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamList params) : params_(std::move(params))
  {
    for (auto* p : params_) p->set_requires_grad(false);
  }
  ~FreezeGuard()
  {
    for (auto* p : params_) p->set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamList params_;
};

void note_skip(TrainState& state, const std::string& reason)
{
  ++state.consecutive_skips;
  ++state.total_skips;
  std::fprintf(stderr, "odgn: skipped step at iteration %zu: %s\n", state.iteration, reason.c_str());
  if (state.consecutive_skips >= state.config.max_consecutive_skips)
    throw NumericError("aborting after " + std::to_string(state.consecutive_skips) +
                       " consecutive degenerate generator outputs (last: " + reason + ")");
}

std::string norm_dump(TrainState& state)
{
  std::ostringstream out;
  out << "generator |w|=" << parameter_norm(state.generator.parameters())
      << " |grad|=" << gradient_norm(state.generator.parameters())
      << "; critic |w|=" << parameter_norm(state.critic.parameters())
      << " |grad|=" << gradient_norm(state.critic.parameters());
  const GravityParams g = state.generator.gravity.values();
  out << "; gravity log_g=" << g.log_g << " l1=" << g.lambda1 << " l2=" << g.lambda2 << " l3=" << g.lambda3;
  return out.str();
}

double window_std(const std::vector<LossRecord>& h, std::size_t window, double LossRecord::*field)
{
  double mean = 0.0;
  for (std::size_t k = h.size() - window; k < h.size(); ++k) mean += h[k].*field;
  mean /= static_cast<double>(window);
  double var = 0.0;
  for (std::size_t k = h.size() - window; k < h.size(); ++k) var += (h[k].*field - mean) * (h[k].*field - mean);
  return std::sqrt(var / static_cast<double>(window));
}

MetricSnapshot snapshot(const TrainState& state, const std::vector<PreparedCity>& cities)
{
  Rng rng(state.config.seed ^ (0x9e3779b97f4a7c15ULL + state.iteration));
  MetricSnapshot s{state.iteration, 0.0, 0.0};
  for (const auto& pc : cities) {
    const GeneratedSample g = generate_sample(state.generator, *pc.city, rng);
    s.mean_cpc += cpc(*pc.city->od, g.od);
    s.mean_rmse += rmse(*pc.city->od, g.od);
  }
  s.mean_cpc /= static_cast<double>(cities.size());
  s.mean_rmse /= static_cast<double>(cities.size());
  return s;
}

void check_cities(const std::vector<City>& cities)
{
  if (cities.empty()) throw UsageError("training needs at least one city");
  std::string missing;
  for (const auto& c : cities)
    if (!c.od) missing += (missing.empty() ? "" : ", ") + c.name;
  if (!missing.empty()) throw DataError("training cities without od.csv: " + missing);
  for (const auto& c : cities)
    if (c.attr_dim() != cities.front().attr_dim())
      throw DataError("city " + c.name + " has " + std::to_string(c.attr_dim()) + " attributes, expected " +
                      std::to_string(cities.front().attr_dim()));
}

}  // namespace

void TrainConfig::validate() const
{
  if (!(clip > 0.0)) throw UsageError("clip must be positive");
  if (n_critic_early < 1 || n_critic_late < 1) throw UsageError("n_critic must be at least 1");
  if (!(lr_generator > 0.0) || !(lr_critic > 0.0)) throw UsageError("learning rates must be positive");
  if (batch_walks < 1) throw UsageError("batch_walks must be at least 1");
  if (walk_length < 1) throw UsageError("walk_length must be at least 1");
  if (!(tau > 0.0)) throw UsageError("tau must be positive");
  if (embed_dim < 2) throw UsageError("embed_dim must be at least 2");
  if (noise_dim < 0) throw UsageError("noise_dim must be non-negative");
  if (heads < 1 || gat_layers < 1) throw UsageError("heads and gat_layers must be at least 1");
  if (embed_dim % static_cast<Eigen::Index>(heads) != 0) throw UsageError("embed_dim must be divisible by heads");
  if (tcn_channels < 1 || tcn_kernel < 1 || tcn_levels < 1) throw UsageError("bad TCN shape");
  if (max_consecutive_skips < 1) throw UsageError("max_consecutive_skips must be at least 1");
  if (convergence_tol > 0.0 && convergence_window < 2) throw UsageError("convergence_window must be at least 2");
}

std::size_t epoch_of_iteration(std::size_t iteration, std::size_t n_cities)
{
  return iteration / std::max<std::size_t>(n_cities, 1);
}

std::size_t n_critic_for_epoch(const TrainConfig& cfg, std::size_t epoch)
{
  return epoch < cfg.n_critic_switch_epoch ? cfg.n_critic_early : cfg.n_critic_late;
}

ParamList Generator::parameters()
{
  ParamList out = mgat.parameters();
  for (auto* p : gravity.parameters()) out.push_back(p);
  return out;
}

std::vector<PreparedCity> prepare_cities(const std::vector<City>& cities, const FeatureScaler& scaler)
{
  check_cities(cities);
  std::vector<PreparedCity> out;
  out.reserve(cities.size());
  for (const auto& c : cities) {
    PreparedCity p;
    p.city = &c;
    p.scaled_attributes = scaler.transform(c.attribute_matrix());
    p.walk.attributes = p.scaled_attributes;
    p.walk.flow_norm = flow_feature_norm(*c.od);
    out.push_back(std::move(p));
  }
  return out;
}

TrainState TrainState::init(const TrainConfig& cfg, std::size_t attr_dim, const FeatureScaler& scaler)
{
  cfg.validate();
  TrainState s;
  s.config = cfg;
  s.rng = Rng(cfg.seed);

  MgatConfig mc;
  mc.attr_dim = static_cast<Eigen::Index>(attr_dim);
  mc.noise_dim = cfg.noise_dim;
  mc.embed_dim = cfg.embed_dim;
  mc.heads = cfg.heads;
  mc.layers = cfg.gat_layers;
  s.generator.mgat = MgatParams::init(mc, s.rng);
  s.generator.mgat.scaler = scaler;
  s.generator.gravity = GravityVars::init(cfg.gravity_init);

  TcnConfig tc;
  tc.input_dim = static_cast<Eigen::Index>(attr_dim) + 1;
  tc.channels = cfg.tcn_channels;
  tc.kernel = cfg.tcn_kernel;
  tc.dilations.clear();
  for (std::size_t k = 0; k < cfg.tcn_levels; ++k) tc.dilations.push_back(Eigen::Index{1} << k);
  s.critic = TcnParams::init(tc, s.rng);

  s.opt_generator.lr = cfg.lr_generator;
  s.opt_critic.lr = cfg.lr_critic;
  return s;
}

DecodedFlows generate_flows(const Generator& gen, const PreparedCity& city, const Matrix& noise)
{
  const ad::Var e = encode(city.scaled_attributes, city.city->transport, noise, gen.mgat);
  return decode_flows(e, gen.gravity);
}

GeneratedSample generate_sample(const Generator& gen, const City& city, Rng& rng)
{
  if (static_cast<Eigen::Index>(city.attr_dim()) != gen.mgat.config.attr_dim)
    throw DataError("city " + city.name + " has " + std::to_string(city.attr_dim()) +
                    " attributes, the model expects " + std::to_string(gen.mgat.config.attr_dim));
  ad::NoGradGuard no_grad;
  const Matrix noise = rng.normal_matrix(static_cast<Eigen::Index>(city.size()), gen.mgat.config.noise_dim);
  const ad::Var e = encode(city, noise, gen.mgat);
  const DecodedFlows d = decode_flows(e, gen.gravity);
  return {ODNetwork(d.flows.value()), split_embedding(e.value())};
}

StepResult critic_step(TrainState& state, const std::vector<PreparedCity>& cities)
{
  const TrainConfig& cfg = state.config;
  StepResult r;
  r.city = state.rng.index(cities.size());
  const PreparedCity& pc = cities[r.city];
  const auto n = static_cast<Eigen::Index>(pc.city->size());

  WalkBatch fake;
  try {
    ad::NoGradGuard no_grad;
    const Matrix noise = state.rng.normal_matrix(n, cfg.noise_dim);
    const DecodedFlows d = generate_flows(state.generator, pc, noise);
    fake = sample_walks(ODNetwork(d.flows.value()), pc.walk, cfg.batch_walks, cfg.walk_length, state.rng, false);
  } catch (const NumericError& e) {
    note_skip(state, e.what());
    r.skipped = true;
    return r;
  } catch (const DataError& e) {
    note_skip(state, e.what());
    r.skipped = true;
    return r;
  }
  state.consecutive_skips = 0;
  const WalkBatch real = sample_walks(*pc.city->od, pc.walk, cfg.batch_walks, cfg.walk_length, state.rng, true);

  const ParamList params = state.critic.parameters();
  zero_grad(params);
  const auto b = static_cast<Eigen::Index>(cfg.batch_walks);
  const auto len = static_cast<Eigen::Index>(cfg.walk_length);
  const ad::Var loss = ad::sub(ad::mean(score(fake.features, b, len, state.critic)),
                               ad::mean(score(real.features, b, len, state.critic)));
  r.loss = loss.item();
  ad::backward(loss);
  state.opt_critic.step(params);
  clip_parameters(params, cfg.clip);
  return r;
}

StepResult generator_step(TrainState& state, const std::vector<PreparedCity>& cities)
{
  const TrainConfig& cfg = state.config;
  StepResult r;
  r.city = state.rng.index(cities.size());
  const PreparedCity& pc = cities[r.city];
  const auto n = static_cast<Eigen::Index>(pc.city->size());

  FreezeGuard frozen(state.critic.parameters());
  const ParamList params = state.generator.parameters();
  zero_grad(params);
  ad::Var loss;
  try {
    const Matrix noise = state.rng.normal_matrix(n, cfg.noise_dim);
    const DecodedFlows d = generate_flows(state.generator, pc, noise);
    const WalkBatch fake = sample_walks_st(d.flows, pc.walk, cfg.batch_walks, cfg.walk_length, cfg.tau, state.rng);
    loss = ad::scale(ad::mean(score(fake.features, static_cast<Eigen::Index>(cfg.batch_walks),
                                    static_cast<Eigen::Index>(cfg.walk_length), state.critic)),
                     -1.0);
  } catch (const NumericError& e) {
    note_skip(state, e.what());
    r.skipped = true;
    return r;
  } catch (const DataError& e) {
    note_skip(state, e.what());
    r.skipped = true;
    return r;
  }
  state.consecutive_skips = 0;
  r.loss = loss.item();
  ad::backward(loss);
  state.opt_generator.step(params);
  return r;
}

void calibrate_gravity_scale(TrainState& state, const std::vector<PreparedCity>& cities)
{
  double shift = 0.0;
  for (const auto& pc : cities) {
    const GeneratedSample g = generate_sample(state.generator, *pc.city, state.rng);
    const double n = static_cast<double>(pc.city->size());
    const double fake_mean = g.od.total_off_diagonal() / (n * (n - 1.0));
    const double real_mean = pc.city->od->total_off_diagonal() / (n * (n - 1.0));
    if (!(fake_mean > 0.0) || !(real_mean > 0.0)) throw NumericError("cannot calibrate gravity scale on " + pc.city->name);
    shift += std::log(real_mean) - std::log(fake_mean);
  }
  state.generator.gravity.log_g.mutable_value()(0, 0) += shift / static_cast<double>(cities.size());
}

void train(TrainState& state, const std::vector<City>& cities, const IterationCallback& on_iteration)
{
  const TrainConfig& cfg = state.config;
  const auto prepared = prepare_cities(cities, state.generator.mgat.scaler);
  using Clock = std::chrono::steady_clock;

  while (state.iteration < cfg.iterations) {
    const auto t0 = Clock::now();
    const std::size_t n_critic = n_critic_for_epoch(cfg, epoch_of_iteration(state.iteration, cities.size()));
    double loss_d = 0.0;
    for (std::size_t done = 0; done < n_critic;) {
      const StepResult s = critic_step(state, prepared);
      if (s.skipped) continue;
      loss_d += s.loss;
      ++done;
    }
    StepResult g;
    do {
      g = generator_step(state, prepared);
    } while (g.skipped);

    LossRecord rec;
    rec.iter = state.iteration;
    rec.loss_g = g.loss;
    rec.loss_d = loss_d / static_cast<double>(n_critic);
    rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (!std::isfinite(rec.loss_g) || !std::isfinite(rec.loss_d))
      throw NumericError("non-finite loss at iteration " + std::to_string(state.iteration) + ": " + norm_dump(state));
    state.history.push_back(rec);
    ++state.iteration;
    if (on_iteration) on_iteration(state, rec);

    if (cfg.checkpoint_interval > 0 && !cfg.checkpoint_path.empty() && state.iteration % cfg.checkpoint_interval == 0) {
      state.snapshots.push_back(snapshot(state, prepared));
      save_checkpoint(state, cfg.checkpoint_path);
    }
    if (cfg.convergence_tol > 0.0 && state.history.size() >= cfg.convergence_window &&
        window_std(state.history, cfg.convergence_window, &LossRecord::loss_g) < cfg.convergence_tol &&
        window_std(state.history, cfg.convergence_window, &LossRecord::loss_d) < cfg.convergence_tol)
      break;
  }
}

TrainState train(const std::vector<City>& cities, const TrainConfig& cfg, const IterationCallback& on_iteration)
{
  cfg.validate();
  check_cities(cities);
  std::vector<Matrix> attrs;
  attrs.reserve(cities.size());
  for (const auto& c : cities) attrs.push_back(c.attribute_matrix());
  TrainState state = TrainState::init(cfg, cities.front().attr_dim(), FeatureScaler::fit(attrs));
  if (cfg.calibrate_scale) calibrate_gravity_scale(state, prepare_cities(cities, state.generator.mgat.scaler));
  train(state, cities, on_iteration);
  return state;
}

void save_checkpoint(const TrainState& state_in, const std::filesystem::path& path)
{
  TrainState state = state_in;  // shallow: parameter handles share their nodes
  CheckpointBlob blob;
  blob.magic = kCheckpointMagic;
  blob.version = kCheckpointVersion;
  blob.attr_dim = static_cast<std::uint64_t>(state.generator.mgat.config.attr_dim);
  blob.config = to_key_values(state.config);
  blob.scaler_mean = to_blob(column_matrix(state.generator.mgat.scaler.mean));
  blob.scaler_scale = to_blob(column_matrix(state.generator.mgat.scaler.scale));
  blob.generator = to_blobs(values_of(state.generator.parameters()));
  blob.critic = to_blobs(values_of(state.critic.parameters()));
  blob.opt_generator = to_blobs(state.opt_generator.mean_square);
  blob.opt_critic = to_blobs(state.opt_critic.mean_square);
  blob.iteration = state.iteration;
  blob.rng = state.rng.state();
  for (const auto& h : state.history)
    blob.history.push_back({static_cast<double>(h.iter), h.loss_g, h.loss_d, h.wall_ms});
  for (const auto& s : state.snapshots) blob.snapshots.push_back({static_cast<double>(s.iter), s.mean_cpc, s.mean_rmse});
  blob.consecutive_skips = state.consecutive_skips;
  blob.total_skips = state.total_skips;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, static_cast<std::streamsize>(std::strlen(kCheckpointMagic)));
    cereal::PortableBinaryOutputArchive ar(out);
    ar(blob);
  }

  nlohmann::json j;
  j["iteration"] = state.iteration;
  j["config"] = blob.config;
  j["total_skips"] = state.total_skips;
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& h : state.history)
    losses.push_back({{"iter", h.iter}, {"loss_g", h.loss_g}, {"loss_d", h.loss_d}, {"wall_ms", h.wall_ms}});
  j["loss_history"] = std::move(losses);
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& s : state.snapshots)
    snaps.push_back({{"iter", s.iter}, {"mean_cpc", s.mean_cpc}, {"mean_rmse", s.mean_rmse}});
  j["metric_snapshots"] = std::move(snaps);
  std::ofstream side(path.string() + ".json");
  if (!side) throw DataError("cannot write checkpoint sidecar " + path.string() + ".json");
  side << j.dump(2) << "\n";
}

TrainState load_checkpoint(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::string header(std::strlen(kCheckpointMagic), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (!in || header != kCheckpointMagic) throw DataError(path.string() + " is not an odgn checkpoint");
  CheckpointBlob blob;
  try {
    cereal::PortableBinaryInputArchive ar(in);
    ar(blob);
  } catch (const cereal::Exception& e) {
    throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
  } catch (const std::bad_alloc&) {
    throw DataError("corrupt checkpoint " + path.string());
  } catch (const std::length_error&) {
    throw DataError("corrupt checkpoint " + path.string());
  }
  if (blob.magic != kCheckpointMagic) throw DataError(path.string() + " is not an odgn checkpoint");
  if (blob.version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(blob.version));

  TrainConfig cfg;
  const auto used = apply_config(cfg, blob.config);
  if (used.size() != blob.config.size()) throw DataError("checkpoint config has unknown keys");
  FeatureScaler scaler;
  scaler.mean = to_vector(from_blob(blob.scaler_mean));
  scaler.scale = to_vector(from_blob(blob.scaler_scale));
  if (scaler.fitted() && static_cast<std::uint64_t>(scaler.mean.size()) != blob.attr_dim)
    throw DataError("checkpoint scaler does not match its attribute dimension");

  TrainState s = TrainState::init(cfg, blob.attr_dim, scaler);
  assign_values(s.generator.parameters(), blob.generator, "generator");
  assign_values(s.critic.parameters(), blob.critic, "critic");
  s.opt_generator.mean_square = from_blobs(blob.opt_generator);
  s.opt_critic.mean_square = from_blobs(blob.opt_critic);
  s.iteration = blob.iteration;
  s.rng.set_state(blob.rng);
  for (const auto& h : blob.history) s.history.push_back({static_cast<std::size_t>(h[0]), h[1], h[2], h[3]});
  for (const auto& m : blob.snapshots) s.snapshots.push_back({static_cast<std::size_t>(m[0]), m[1], m[2]});
  s.consecutive_skips = blob.consecutive_skips;
  s.total_skips = blob.total_skips;
  return s;
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss log " + path.string());
  out << "iter,loss_g,loss_d,wall_ms\n";
  char buf[160];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.3f\n", h.iter, h.loss_g, h.loss_d, h.wall_ms);
    out << buf;
  }
}

}  // namespace odgn
