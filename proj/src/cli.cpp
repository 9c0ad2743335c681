#include "odgn/cli.hpp"

#include "odgn/config.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace odgn {

namespace {

std::vector<City> load_training(const std::vector<fs::path>& dirs)
{
  if (dirs.empty()) throw UsageError("no training directories given");
  std::vector<City> cities;
  std::string missing;
  for (const auto& d : dirs) {
    City c = load_city(d);
    if (!c.od) missing += (missing.empty() ? "" : ", ") + d.string();
    cities.push_back(std::move(c));
  }
  if (!missing.empty()) throw DataError("training directories without od.csv: " + missing);
  return cities;
}

void write_json(const nlohmann::json& j, const std::string& out)
{
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream f(out);
  if (!f) throw DataError("cannot write " + out);
  f << j.dump(2) << "\n";
}

KeyValues maybe_read(const std::string& path) { return path.empty() ? KeyValues{} : read_key_values(path); }

}  // namespace

std::vector<fs::path> cmd_synth(const SynthConfig& cfg, std::size_t n_cities, const fs::path& out_dir, std::ostream& log)
{
  cfg.validate();
  if (n_cities == 0) throw UsageError("n_cities must be at least 1");
  std::vector<fs::path> dirs;
  for (std::size_t k = 0; k < n_cities; ++k) {
    SynthConfig c = cfg;
    c.seed = cfg.seed + k;
    const City city = synth_city(c);
    const fs::path dir = out_dir / city.name;
    save_city(city, dir);
    log << "seed " << c.seed << " -> " << dir.string() << "\n";
    dirs.push_back(dir);
  }
  return dirs;
}

TrainState cmd_train(const std::vector<fs::path>& train_dirs, const TrainConfig& cfg, const fs::path& checkpoint,
                     const fs::path& loss_csv, std::ostream& log)
{
  const std::vector<City> cities = load_training(train_dirs);
  TrainState state = train(cities, cfg, [&log](const TrainState& s, const LossRecord& r) {
    if (s.iteration % 10 == 0 || s.iteration == s.config.iterations)
      log << "iter " << r.iter << " loss_g " << r.loss_g << " loss_d " << r.loss_d << "\n";
  });
  save_checkpoint(state, checkpoint);
  write_loss_csv(state.history, loss_csv);
  return state;
}

std::vector<fs::path> generated_paths(const fs::path& out, const GenerateOptions& opt)
{
  if (opt.samples == 1 || opt.mean) return {out};
  std::vector<fs::path> paths;
  for (std::size_t k = 0; k < opt.samples; ++k) {
    fs::path p = out;
    p.replace_filename(out.stem().string() + "_" + std::to_string(k) + out.extension().string());
    paths.push_back(p);
  }
  return paths;
}

std::vector<fs::path> cmd_generate(const fs::path& checkpoint, const fs::path& target_dir, const fs::path& out,
                                   const GenerateOptions& opt)
{
  if (opt.samples == 0) throw UsageError("--samples must be at least 1");
  const TrainState state = load_checkpoint(checkpoint);
  const City city = load_city(target_dir);
  Rng rng(opt.seed);
  std::vector<ODNetwork> draws;
  for (std::size_t k = 0; k < opt.samples; ++k) draws.push_back(generate_sample(state.generator, city, rng).od);

  const auto paths = generated_paths(out, opt);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (opt.mean) {
    Matrix sum = Matrix::Zero(static_cast<Eigen::Index>(city.size()), static_cast<Eigen::Index>(city.size()));
    for (const auto& d : draws) sum += d.flows();
    save_od(ODNetwork(sum / static_cast<double>(draws.size())), city, paths.front(), opt.round);
  } else {
    for (std::size_t k = 0; k < draws.size(); ++k) save_od(draws[k], city, paths[k], opt.round);
  }
  return paths;
}

nlohmann::json evaluation_json(const Evaluation& e)
{
  nlohmann::json j;
  j["cpc"] = e.cpc;
  j["rmse"] = e.rmse;
  j["f_jsd"] = e.f_jsd.infinite ? nlohmann::json(nullptr) : nlohmann::json(e.f_jsd.value);
  j["f_jsd_infinite"] = e.f_jsd.infinite;
  j["n_regions"] = e.n_regions;
  j["jsd_standard"] = e.mode == JsdMode::Standard;
  return j;
}

nlohmann::json cmd_evaluate(const fs::path& real_dir, const fs::path& generated_csv, JsdMode mode)
{
  const City city = load_city(real_dir);
  if (!city.od) throw DataError(real_dir.string() + " has no od.csv to evaluate against");
  const ODNetwork fake = load_od(generated_csv, city);
  return evaluation_json(evaluate(*city.od, fake, mode));
}

BaselineKind parse_baseline_kind(const std::string& name)
{
  if (name == "gravity") return BaselineKind::Gravity;
  if (name == "deepgravity") return BaselineKind::DeepGravity;
  throw UsageError("unknown baseline '" + name + "' (expected gravity or deepgravity)");
}

nlohmann::json cmd_baseline(const std::vector<fs::path>& train_dirs, const fs::path& target_dir, BaselineKind kind,
                            JsdMode mode, const DeepGravityConfig& dg)
{
  const std::vector<City> cities = load_training(train_dirs);
  const City target = load_city(target_dir);
  if (!target.od) throw DataError(target_dir.string() + " has no od.csv to evaluate against");
  nlohmann::json j;
  if (kind == BaselineKind::Gravity) {
    const GravityFit fit = gravity_baseline_fit(cities);
    j = evaluation_json(evaluate(*target.od, gravity_baseline_predict(target, fit.params), mode));
    j["baseline"] = "gravity";
    j["params"] = {{"log_g", fit.params.log_g},
                   {"lambda1", fit.params.lambda1},
                   {"lambda2", fit.params.lambda2},
                   {"lambda3", fit.params.lambda3}};
  } else {
    const DeepGravityParams p = deep_gravity_fit(cities, dg);
    j = evaluation_json(evaluate(*target.od, deep_gravity_predict(target, p), mode));
    j["baseline"] = "deepgravity";
    j["hidden_layers"] = dg.hidden_layers;
  }
  return j;
}

int run_cli(int argc, const char* const* argv)
{
  CLI::App app{"odgn: origin-destination network generation"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;

  auto* synth = app.add_subcommand("synth", "write synthetic city directories");
  std::size_t n_cities = 1;
  synth->add_option("--config", config, "key-value config (SynthConfig keys plus n_cities)");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--seed", seed, "seed of the first city");

  auto* trn = app.add_subcommand("train", "train the generator on cities with od.csv");
  std::vector<std::string> train_dirs;
  std::optional<std::size_t> iters;
  std::string loss_csv;
  trn->add_option("dirs", train_dirs, "training city directories")->required();
  trn->add_option("--config", config, "key-value config (TrainConfig keys)");
  trn->add_option("--out", out, "checkpoint path")->required();
  trn->add_option("--seed", seed, "training seed");
  trn->add_option("--iters", iters, "generator iterations");
  trn->add_option("--loss-csv", loss_csv, "loss log path (default <out>.loss.csv)");

  auto* gen = app.add_subcommand("generate", "generate OD flows for a target city");
  std::string checkpoint;
  std::string target;
  GenerateOptions gopt;
  gen->add_option("checkpoint", checkpoint, "trained checkpoint")->required();
  gen->add_option("target", target, "target city directory")->required();
  gen->add_option("--out", out, "output od.csv path")->required();
  gen->add_option("--samples", gopt.samples, "number of noise draws");
  gen->add_flag("--mean", gopt.mean, "write the elementwise mean of the draws");
  gen->add_flag("--round", gopt.round, "round flows to integers");
  gen->add_option("--seed", seed, "noise seed");

  auto* eval = app.add_subcommand("evaluate", "compare a generated od.csv with a city's real flows");
  std::string generated;
  bool jsd_standard = false;
  eval->add_option("real", target, "city directory with od.csv")->required();
  eval->add_option("generated", generated, "generated od.csv")->required();
  eval->add_flag("--jsd-standard", jsd_standard, "textbook Jensen-Shannon form");
  eval->add_option("--out", out, "write the JSON report here instead of stdout");

  auto* base = app.add_subcommand("baseline", "fit a baseline on training cities and evaluate on a target");
  std::vector<std::string> base_dirs;
  std::string model = "gravity";
  base->add_option("dirs", base_dirs, "training city directories")->required();
  base->add_option("--target", target, "target city directory")->required();
  base->add_option("--model", model, "gravity or deepgravity");
  base->add_option("--config", config, "key-value config (deep gravity keys)");
  base->add_flag("--jsd-standard", jsd_standard, "textbook Jensen-Shannon form");
  base->add_option("--seed", seed, "deep gravity seed");
  base->add_option("--out", out, "write the JSON report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const JsdMode mode = jsd_standard ? JsdMode::Standard : JsdMode::Verbatim;
  try {
    if (*synth) {
      SynthConfig cfg;
      const KeyValues kv = maybe_read(config);
      auto used = apply_config(cfg, kv);
      if (auto it = kv.find("n_cities"); it != kv.end()) {
        try {
          std::size_t pos = 0;
          const long long v = std::stoll(it->second, &pos);
          if (pos != it->second.size() || v < 1) throw std::invalid_argument(it->second);
          n_cities = static_cast<std::size_t>(v);
        } catch (const std::logic_error&) {
          throw UsageError("config key 'n_cities': bad integer '" + it->second + "'");
        }
        used.insert("n_cities");
      }
      reject_unknown_keys(kv, used);
      if (seed) cfg.seed = *seed;
      cmd_synth(cfg, n_cities, out, std::cout);
    } else if (*trn) {
      TrainConfig cfg;
      const KeyValues kv = maybe_read(config);
      reject_unknown_keys(kv, apply_config(cfg, kv));
      if (seed) cfg.seed = *seed;
      if (iters) cfg.iterations = *iters;
      std::vector<fs::path> dirs(train_dirs.begin(), train_dirs.end());
      cmd_train(dirs, cfg, out, loss_csv.empty() ? fs::path(out + ".loss.csv") : fs::path(loss_csv), std::cerr);
    } else if (*gen) {
      if (seed) gopt.seed = *seed;
      for (const auto& p : cmd_generate(checkpoint, target, out, gopt)) std::cout << p.string() << "\n";
    } else if (*eval) {
      write_json(cmd_evaluate(target, generated, mode), out);
    } else if (*base) {
      DeepGravityConfig dg;
      const KeyValues kv = maybe_read(config);
      reject_unknown_keys(kv, apply_config(dg, kv));
      if (seed) dg.seed = *seed;
      std::vector<fs::path> dirs(base_dirs.begin(), base_dirs.end());
      write_json(cmd_baseline(dirs, target, parse_baseline_kind(model), mode, dg), out);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "odgn: usage error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "odgn: usage error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "odgn: data error: %s\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "odgn: data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "odgn: numeric failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "odgn: numeric failure: %s\n", e.what());
    return 3;
  }
  return 0;
}

}  // namespace odgn
