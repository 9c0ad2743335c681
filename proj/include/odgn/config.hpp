#pragma once

#include "odgn/baselines.hpp"
#include "odgn/data.hpp"
#include "odgn/trainer.hpp"

#include <filesystem>
#include <map>
#include <set>
#include <string>

namespace odgn {

/// `key = value` pairs, one per line; `#` starts a comment. Keys are lower_snake_case.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& file);
std::string format_key_values(const KeyValues& kv);

/// Each apply_* sets the fields it recognises and returns the keys it consumed.
/// Malformed values throw UsageError.
std::set<std::string> apply_config(TrainConfig& cfg, const KeyValues& kv);
std::set<std::string> apply_config(SynthConfig& cfg, const KeyValues& kv);
std::set<std::string> apply_config(DeepGravityConfig& cfg, const KeyValues& kv);

/// Throws UsageError naming every key of `kv` that is not in `used`.
void reject_unknown_keys(const KeyValues& kv, const std::set<std::string>& used);

KeyValues to_key_values(const TrainConfig& cfg);
KeyValues to_key_values(const SynthConfig& cfg);

}  // namespace odgn
