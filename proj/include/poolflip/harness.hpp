#pragma once

// Experiment runner: tournaments, sweeps, checkpoint evaluation tables,
// presets, CSV exports and run manifests.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolflip/engine.hpp"
#include "poolflip/heuristics.hpp"
#include "poolflip/learner.hpp"

namespace poolflip {

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Statistics

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // n - 1 denominator, 0 for a single value
  double se = 0.0;
  int count = 0;
};

/// Throws std::invalid_argument on an empty input.
Summary summarize(std::span<const double> values);

// ---------------------------------------------------------------------------
// Configuration documents

nlohmann::json to_json(const GameConfig& config);
/// Unknown keys are rejected with ConfigError; missing keys keep `base`.
GameConfig game_config_from_json(const nlohmann::json& j, GameConfig base = {});

// ---------------------------------------------------------------------------
// Presets

struct ExperimentPreset {
  std::string name;
  std::string description;
  GameConfig game;
  std::vector<HeuristicSpec> pool;      // PSRO pool and evaluation roster
  std::vector<HeuristicSpec> roster;    // heuristic tournament roster
  std::vector<HeuristicSpec> transfer;  // unseen opponents
  int episodes = 100;
  std::uint64_t seed = 0;
  double temperature = 0.25;

  nlohmann::json to_json() const;
};

const std::vector<ExperimentPreset>& presets();
/// Throws ConfigError listing the known names.
const ExperimentPreset& find_preset(const std::string& name);

std::vector<HeuristicSpec> paper_pool();
std::vector<HeuristicSpec> figure1_roster();
std::vector<HeuristicSpec> transfer_roster();
/// Ablation grid: defenders and attackers of the heuristic parameter sweep.
std::vector<HeuristicSpec> ablation_defenders();
std::vector<HeuristicSpec> ablation_attackers();

// ---------------------------------------------------------------------------
// Tournaments

struct MatchupResult {
  std::string defender;
  std::string attacker;
  int episodes = 0;
  double mean = 0.0;        // defender reward
  double std = 0.0;
  double ownership = 0.0;   // defender ownership fraction
  double attacker_ownership = 0.0;
  std::vector<double> rewards;
  std::vector<double> ownerships;
};

struct TournamentTable {
  std::vector<std::string> defenders;
  std::vector<std::string> attackers;
  std::vector<MatchupResult> cells;  // row-major: defender-major

  const MatchupResult& at(std::size_t d, std::size_t a) const {
    return cells.at(d * attackers.size() + a);
  }
  /// Throws std::out_of_range.
  const MatchupResult& find(const std::string& defender, const std::string& attacker) const;
};

/// Seed for one cell; episodes within a cell use derive_seed(cell, {e}).
std::uint64_t cell_seed(std::uint64_t seed, const std::string& defender, const std::string& attacker);

/// All specs are validated before any simulation runs.
TournamentTable tournament(const GameConfig& game, const std::vector<HeuristicSpec>& defenders,
                           const std::vector<HeuristicSpec>& attackers, int episodes,
                           std::uint64_t seed, int workers = 1);

/// Spec strings variant; a malformed string throws SpecError naming it.
TournamentTable tournament(const GameConfig& game, const std::vector<std::string>& defenders,
                           const std::vector<std::string>& attackers, int episodes,
                           std::uint64_t seed, int workers = 1);

/// defender,attacker,episodes,mean,std,ownership
void write_tournament_csv(std::ostream& os, const TournamentTable& table);
/// Reads what write_tournament_csv wrote (raw episode values are not stored).
TournamentTable read_tournament_csv(std::istream& is);

/// Display-name matrix (rows defenders, columns attackers) of mean rewards.
void print_matrix(std::ostream& os, const TournamentTable& table);

// ---------------------------------------------------------------------------
// Sweeps

/// Specs "family:param=v" for each value, merged with `fixed` parameters,
/// e.g. expand_grid("pac", "phase", {2, 4, 8}).
std::vector<HeuristicSpec> expand_grid(const std::string& family, const std::string& parameter,
                                       const std::vector<double>& values,
                                       const std::string& fixed = {});

/// Tournament of the grid (as defenders) against `opponents`.
TournamentTable parameter_sweep(const GameConfig& game, const std::vector<HeuristicSpec>& grid,
                                const std::vector<HeuristicSpec>& opponents, int episodes,
                                std::uint64_t seed, int workers = 1);

// ---------------------------------------------------------------------------
// Checkpoint evaluation

struct AgentRow {
  std::string agent;
  std::vector<std::string> opponents;
  std::vector<double> reward;
  std::vector<double> reward_std;
  std::vector<double> ownership;  // fraction
  int episodes = 0;

  double average_reward() const;
  double average_ownership() const;
};

/// Throws CheckpointError(kDimension) when the checkpoint does not fit.
AgentRow evaluate_checkpoint(const std::string& agent, const PolicyCheckpoint& checkpoint,
                             const GameConfig& game, const std::vector<HeuristicSpec>& opponents,
                             int episodes, std::uint64_t seed, int workers = 1);

AgentRow evaluate_heuristic(const HeuristicSpec& defender, const GameConfig& game,
                            const std::vector<HeuristicSpec>& opponents, int episodes,
                            std::uint64_t seed, int workers = 1);

AgentRow transfer_eval(const std::string& agent, const PolicyCheckpoint& checkpoint,
                       const GameConfig& game, const std::vector<HeuristicSpec>& unseen,
                       int episodes, std::uint64_t seed, int workers = 1);

enum class TableValue { kReward, kOwnershipPercent };

/// agent,<opponent display names...>,average. All rows must share opponents.
void write_agent_table_csv(std::ostream& os, const std::vector<AgentRow>& rows, TableValue value);

struct AgentTable {
  std::vector<std::string> opponents;
  std::vector<std::string> agents;
  std::vector<std::vector<double>> values;  // per agent, then the average last
};
AgentTable read_agent_table_csv(std::istream& is);

// ---------------------------------------------------------------------------
// Manifests and output files

/// Writes `text` to dir/name, creating dir. Returns the path.
std::filesystem::path write_output(const std::filesystem::path& dir, const std::string& name,
                                   const std::string& text);

/// {tool, version, command, config, outputs: [{file, sha1}]}.
nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                             const std::vector<std::filesystem::path>& outputs);

}  // namespace poolflip
