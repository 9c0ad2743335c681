#include "odgn/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace odgn {

namespace {

std::string trim(const std::string& s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string show(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(const std::string& v) { return v; }
template <typename T>
  requires std::is_integral_v<T>
std::string show(T v)
{
  return std::to_string(v);
}

void parse_into(const std::string& key, const std::string& s, double& out)
{
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw UsageError("config key '" + key + "': bad number '" + s + "'");
}

void parse_into(const std::string& key, const std::string& s, bool& out)
{
  if (s == "1" || s == "true" || s == "on" || s == "yes")
    out = true;
  else if (s == "0" || s == "false" || s == "off" || s == "no")
    out = false;
  else
    throw UsageError("config key '" + key + "': bad boolean '" + s + "'");
}

void parse_into(const std::string&, const std::string& s, std::string& out) { out = s; }

template <typename T>
  requires std::is_integral_v<T>
void parse_into(const std::string& key, const std::string& s, T& out)
{
  char* end = nullptr;
  if (s.empty() || (s[0] == '-' && std::is_unsigned_v<T>))
    throw UsageError("config key '" + key + "': bad integer '" + s + "'");
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size()) throw UsageError("config key '" + key + "': bad integer '" + s + "'");
  out = static_cast<T>(v);
}

template <typename Cfg>
struct Binding {
  std::string key;
  std::function<void(Cfg&, const std::string&)> set;
  std::function<std::string(const Cfg&)> get;
};

template <typename Cfg, typename T>
Binding<Cfg> field(std::string key, T Cfg::*member)
{
  return {key, [member, key](Cfg& c, const std::string& s) { parse_into(key, s, c.*member); },
          [member](const Cfg& c) { return show(c.*member); }};
}

template <typename T>
Binding<TrainConfig> bind_gravity(std::string key, T GravityParams::*member)
{
  return {key, [member, key](TrainConfig& c, const std::string& s) { parse_into(key, s, c.gravity_init.*member); },
          [member](const TrainConfig& c) { return show(c.gravity_init.*member); }};
}

const std::vector<Binding<TrainConfig>>& train_bindings()
{
  static const std::vector<Binding<TrainConfig>> b{
      field("iterations", &TrainConfig::iterations),
      field("n_critic_early", &TrainConfig::n_critic_early),
      field("n_critic_late", &TrainConfig::n_critic_late),
      field("n_critic_switch_epoch", &TrainConfig::n_critic_switch_epoch),
      field("clip", &TrainConfig::clip),
      field("lr_generator", &TrainConfig::lr_generator),
      field("lr_critic", &TrainConfig::lr_critic),
      field("batch_walks", &TrainConfig::batch_walks),
      field("walk_length", &TrainConfig::walk_length),
      field("tau", &TrainConfig::tau),
      field("seed", &TrainConfig::seed),
      field("convergence_window", &TrainConfig::convergence_window),
      field("convergence_tol", &TrainConfig::convergence_tol),
      field("max_consecutive_skips", &TrainConfig::max_consecutive_skips),
      field("checkpoint_path", &TrainConfig::checkpoint_path),
      field("checkpoint_interval", &TrainConfig::checkpoint_interval),
      field("noise_dim", &TrainConfig::noise_dim),
      field("embed_dim", &TrainConfig::embed_dim),
      field("heads", &TrainConfig::heads),
      field("gat_layers", &TrainConfig::gat_layers),
      field("tcn_channels", &TrainConfig::tcn_channels),
      field("tcn_kernel", &TrainConfig::tcn_kernel),
      field("tcn_levels", &TrainConfig::tcn_levels),
      bind_gravity("init_log_g", &GravityParams::log_g),
      bind_gravity("init_lambda1", &GravityParams::lambda1),
      bind_gravity("init_lambda2", &GravityParams::lambda2),
      bind_gravity("init_lambda3", &GravityParams::lambda3),
      field("calibrate_scale", &TrainConfig::calibrate_scale),
  };
  return b;
}

const std::vector<Binding<SynthConfig>>& synth_bindings()
{
  static const std::vector<Binding<SynthConfig>> b{
      field("n_regions", &SynthConfig::n_regions),
      field("attr_dim", &SynthConfig::attr_dim),
      field("cell_km", &SynthConfig::cell_km),
      field("gravity_g", &SynthConfig::gravity_g),
      field("lambda1", &SynthConfig::lambda1),
      field("lambda2", &SynthConfig::lambda2),
      field("lambda3", &SynthConfig::lambda3),
      field("interaction", &SynthConfig::interaction),
      field("poisson_noise", &SynthConfig::poisson_noise),
      field("seed", &SynthConfig::seed),
      field("attribute_seed", &SynthConfig::attribute_seed),
      field("bus_lines", &SynthConfig::bus_lines),
      field("rail_lines", &SynthConfig::rail_lines),
      field("pop_log_mean", &SynthConfig::pop_log_mean),
      field("pop_log_sd", &SynthConfig::pop_log_sd),
  };
  return b;
}

const std::vector<Binding<DeepGravityConfig>>& deep_gravity_bindings()
{
  static const std::vector<Binding<DeepGravityConfig>> b{
      field("hidden_layers", &DeepGravityConfig::hidden_layers),
      field("width", &DeepGravityConfig::width),
      field("leaky_slope", &DeepGravityConfig::leaky_slope),
      field("epochs", &DeepGravityConfig::epochs),
      field("batch_size", &DeepGravityConfig::batch_size),
      field("lr", &DeepGravityConfig::lr),
      field("seed", &DeepGravityConfig::seed),
  };
  return b;
}

template <typename Cfg>
std::set<std::string> apply_bindings(Cfg& cfg, const KeyValues& kv, const std::vector<Binding<Cfg>>& bindings)
{
  std::set<std::string> used;
  for (const auto& b : bindings) {
    auto it = kv.find(b.key);
    if (it == kv.end()) continue;
    b.set(cfg, it->second);
    used.insert(b.key);
  }
  return used;
}

template <typename Cfg>
KeyValues dump_bindings(const Cfg& cfg, const std::vector<Binding<Cfg>>& bindings)
{
  KeyValues kv;
  for (const auto& b : bindings) kv[b.key] = b.get(cfg);
  return kv;
}

}  // namespace

KeyValues parse_key_values(const std::string& text)
{
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw UsageError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& file)
{
  std::ifstream in(file);
  if (!in) throw UsageError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv)
{
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::set<std::string> apply_config(TrainConfig& cfg, const KeyValues& kv) { return apply_bindings(cfg, kv, train_bindings()); }
std::set<std::string> apply_config(SynthConfig& cfg, const KeyValues& kv) { return apply_bindings(cfg, kv, synth_bindings()); }

std::set<std::string> apply_config(DeepGravityConfig& cfg, const KeyValues& kv)
{
  return apply_bindings(cfg, kv, deep_gravity_bindings());
}

void reject_unknown_keys(const KeyValues& kv, const std::set<std::string>& used)
{
  std::string bad;
  for (const auto& [k, v] : kv)
    if (!used.count(k)) bad += (bad.empty() ? "" : ", ") + k;
  if (!bad.empty()) throw UsageError("unknown config keys: " + bad);
}

KeyValues to_key_values(const TrainConfig& cfg) { return dump_bindings(cfg, train_bindings()); }
KeyValues to_key_values(const SynthConfig& cfg) { return dump_bindings(cfg, synth_bindings()); }

}  // namespace odgn
