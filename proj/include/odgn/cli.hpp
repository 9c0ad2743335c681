#pragma once

#include "odgn/baselines.hpp"
#include "odgn/data.hpp"
#include "odgn/metrics.hpp"
#include "odgn/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace odgn {

namespace fs = std::filesystem;

/// Writes `n_cities` synthetic cities under `out_dir`, city k seeded with cfg.seed + k.
/// Returns the directories in order and prints one `seed <s> -> <dir>` line per city to `log`.
std::vector<fs::path> cmd_synth(const SynthConfig& cfg, std::size_t n_cities, const fs::path& out_dir, std::ostream& log);

/// Loads the training cities, trains, and writes the checkpoint plus a loss CSV.
/// Directories without od.csv are listed in the DataError.
TrainState cmd_train(const std::vector<fs::path>& train_dirs, const TrainConfig& cfg, const fs::path& checkpoint,
                     const fs::path& loss_csv, std::ostream& log);

struct GenerateOptions {
  std::size_t samples = 1;
  bool mean = false;
  bool round = false;
  std::uint64_t seed = 0;
};

/// Output files for `samples` draws: `out` itself for one sample or `--mean`,
/// otherwise `<stem>_<k><ext>` next to it.
std::vector<fs::path> generated_paths(const fs::path& out, const GenerateOptions& opt);

std::vector<fs::path> cmd_generate(const fs::path& checkpoint, const fs::path& target_dir, const fs::path& out,
                                   const GenerateOptions& opt);

nlohmann::json evaluation_json(const Evaluation& e);

nlohmann::json cmd_evaluate(const fs::path& real_dir, const fs::path& generated_csv, JsdMode mode);

enum class BaselineKind { Gravity, DeepGravity };

BaselineKind parse_baseline_kind(const std::string& name);

nlohmann::json cmd_baseline(const std::vector<fs::path>& train_dirs, const fs::path& target_dir, BaselineKind kind,
                            JsdMode mode, const DeepGravityConfig& dg = {});

/// Full command-line entry point. Returns the process exit code:
/// 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run_cli(int argc, const char* const* argv);

}  // namespace odgn
