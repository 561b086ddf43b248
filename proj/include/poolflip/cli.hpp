#pragma once

// Command-line front end: tournament, sweep, train, eval, export.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolflip/engine.hpp"
#include "poolflip/learner.hpp"

namespace poolflip::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// Environment overrides, applied after the config file and before flags.
inline constexpr const char* kEnvOutputDir = "POOLFLIP_OUTPUT_DIR";
inline constexpr const char* kEnvWorkers = "POOLFLIP_WORKERS";

struct PsroSection {
  int iterations = 200;
  int eval_episodes = 20;
  int final_eval_episodes = 100;
  std::string mss = "uniform";  // uniform | own | gap
  double own_threshold = 0.5;
  double temperature = 0.25;
  bool self_play = false;
  std::string specialists;  // specialists.json with reference rewards (gap)
};

struct SweepSection {
  std::string family;     // empty: the built-in ablation grid
  std::string parameter;
  std::vector<double> values;
  std::string fixed;      // extra "key=value,..." for every grid point
};

/// The structured document behind every command. Spec lists are stored as
/// canonical identifier strings.
struct RunConfig {
  std::string preset = "paper-default";
  std::uint64_t seed = 0;
  int workers = 1;
  std::string output_dir = "out";
  int episodes = 100;
  GameConfig engine;

  std::vector<std::string> defenders;
  std::vector<std::string> attackers;
  std::vector<std::string> pool;
  std::vector<std::string> transfer;
  std::string opponent;             // specialist target, or "pool"
  std::vector<std::string> order;   // IBR order
  std::vector<std::string> checkpoints;
  std::vector<std::string> baselines;  // heuristic defenders added to eval tables
  std::string roster = "pool";      // eval: pool | transfer | spec list

  std::string mode = "psro";        // train: specialist | ibr | psro
  int ibr_epochs_per_opponent = 0;  // 0: total_epochs / order size
  int checkpoint_every = 10;
  std::string run_name;             // empty: derived from the mode

  TrainConfig train;
  PsroSection psro;
  SweepSection sweep;
};

/// Preset defaults (engine, pool, roster, transfer, seed, temperature).
/// Throws ConfigError for an unknown preset.
RunConfig preset_config(const std::string& preset);

nlohmann::json to_json(const RunConfig& config);

/// Applies a config document over `base`; unknown keys throw ConfigError.
/// A run manifest ({"command", "config"}) is accepted as well.
RunConfig apply_json(const nlohmann::json& j, RunConfig base);

/// Entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace poolflip::cli
