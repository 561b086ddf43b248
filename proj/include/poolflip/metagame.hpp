#pragma once

// Flip-PSRO: policy pool, response objectives, meta-strategy solvers, and
// the IBR and specialist baselines.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "poolflip/engine.hpp"
#include "poolflip/heuristics.hpp"
#include "poolflip/learner.hpp"

namespace poolflip {

// ---------------------------------------------------------------------------
// Pool

struct PoolMember {
  std::string id;
  std::optional<HeuristicSpec> heuristic;                // set for heuristics
  std::shared_ptr<const PolicyCheckpoint> checkpoint;    // set for trained policies
  std::string checkpoint_path;                           // informational, may be empty

  bool is_heuristic() const { return heuristic.has_value(); }
};

class PolicyPool {
 public:
  PolicyPool() = default;
  explicit PolicyPool(const std::vector<HeuristicSpec>& heuristics);

  /// Ids are canonical heuristic identifiers. Throws std::invalid_argument on
  /// a duplicate id.
  void add_heuristic(const HeuristicSpec& spec);
  void add_checkpoint(std::string id, std::shared_ptr<const PolicyCheckpoint> checkpoint,
                      std::string path = {});

  std::size_t size() const { return members_.size(); }
  bool empty() const { return members_.empty(); }
  const PoolMember& member(std::size_t i) const { return members_.at(i); }
  const std::vector<PoolMember>& members() const { return members_; }
  std::vector<std::string> ids() const;
  std::optional<std::size_t> find(const std::string& id) const;

  /// Fresh policy instance for member i.
  std::unique_ptr<Policy> make_policy(std::size_t i, std::uint64_t seed = 0) const;
  std::vector<OpponentFactory> factories() const;

  /// Member ids, kinds and checkpoint paths.
  nlohmann::json manifest() const;

 private:
  std::vector<PoolMember> members_;
};

/// Policy factory for trained checkpoints (stochastic action selection).
std::unique_ptr<Policy> make_checkpoint_policy(std::shared_ptr<const PolicyCheckpoint> checkpoint,
                                               std::string id = "ppo");

// ---------------------------------------------------------------------------
// Objectives

struct RewardObjective {};
struct WinRateObjective {
  double threshold = 0.5;  // fraction in (0, 1]
};
struct NormGapObjective {
  std::map<std::string, double> specialist_rewards;  // by pool member id
};
using ResponseObjective = std::variant<RewardObjective, WinRateObjective, NormGapObjective>;

/// "reward", "own50", "gap"...
std::string objective_name(const ResponseObjective& objective);

/// Throws ConfigError (threshold out of range).
void validate(const ResponseObjective& objective);

/// Fraction of ownership values strictly greater than `threshold`.
/// Throws std::invalid_argument on an empty input.
double win_rate_by_ownership(std::span<const double> ownership, double threshold);

double performance_gap(double agent_reward, double specialist_reward);

/// Min-max normalization; all-equal gaps map to zeros. Needs >= 1 entry.
std::vector<double> normalized_gaps(std::span<const double> gaps);

// ---------------------------------------------------------------------------
// Utilities

struct MemberEvaluation {
  std::string id;
  std::vector<double> rewards;    // per episode, defender side
  std::vector<double> ownership;  // per episode, defender ownership of resource 0

  double mean_reward() const;
  double mean_ownership() const;
};

using PolicyFactory = std::function<std::unique_ptr<Policy>()>;

/// Plays `episodes` episodes of the defender against every pool member.
/// Episode e against member id uses seed derive_seed(seed, {hash(id), e});
/// results do not depend on `workers`.
std::vector<MemberEvaluation> evaluate_against_pool(const GameConfig& game,
                                                    const PolicyFactory& defender,
                                                    const PolicyPool& pool, int episodes,
                                                    std::uint64_t seed, int workers = 1);

struct UtilityRow {
  int iteration = 0;
  std::vector<std::string> ids;
  std::vector<double> values;          // under the objective
  std::vector<double> mean_reward;
  std::vector<double> reward_std;
  std::vector<double> mean_ownership;
  int episodes = 0;
};

/// Reduces evaluations to objective utilities. NormGap requires a specialist
/// reward for every member (ConfigError otherwise).
UtilityRow utility_row(const std::vector<MemberEvaluation>& evaluations,
                       const ResponseObjective& objective, int iteration = 0);

UtilityRow evaluate_utilities(const GameConfig& game, const PolicyFactory& defender,
                              const PolicyPool& pool, const ResponseObjective& objective,
                              int episodes, std::uint64_t seed, int workers = 1);

// ---------------------------------------------------------------------------
// Meta-strategy solvers

using MetaStrategy = std::vector<double>;

bool is_distribution(const MetaStrategy& sigma, double tolerance = 1e-9);

MetaStrategy mss_uniform(std::size_t pool_size);

/// softmax(d / temperature) over per-member difficulty: 1 - win rate for the
/// ownership objective, the normalized gap for the gap objective. Throws
/// ConfigError for the reward objective or a non-positive temperature.
MetaStrategy mss_softmax(const UtilityRow& row, const ResponseObjective& objective,
                         double temperature = 1.0);

/// Plain softmax of a difficulty vector.
MetaStrategy softmax(std::span<const double> difficulty, double temperature = 1.0);

/// Index drawn from sigma with one uniform draw.
std::size_t sample_index(const MetaStrategy& sigma, Rng& rng);

// ---------------------------------------------------------------------------
// Flip-PSRO

struct PsroConfig {
  int iterations = 200;         // one training epoch per iteration
  int eval_episodes = 20;       // per member, per utility row
  int final_eval_episodes = 100;
  ResponseObjective objective = RewardObjective{};
  double temperature = 1.0;
  bool self_play = false;
  std::uint64_t seed = 0;
  int workers = 1;
  TrainConfig train;
  GameConfig game;
  // Forced meta-strategy per iteration (one entry per iteration); used to
  // express IBR as PSRO. Empty means the solver decides.
  std::vector<MetaStrategy> forced_sigma;

  /// Throws ConfigError.
  void validate() const;
};

struct PsroResult {
  PolicyCheckpoint final_policy;
  std::vector<UtilityRow> utilities;        // one row per iteration
  std::vector<MetaStrategy> sigmas;         // sigma used during iteration t
  std::vector<std::vector<std::string>> sigma_ids;
  std::vector<EpochStats> curve;
  std::vector<std::string> opponent_stream;
  std::vector<MemberEvaluation> final_evaluation;  // final_eval_episodes vs the final pool
  PolicyPool pool;
};

/// Iteration-at-a-time PSRO driver, resumable between iterations.
class PsroRunner {
 public:
  PsroRunner(PsroConfig config, PolicyPool pool);

  bool done() const { return iteration_ >= config_.iterations; }
  int iteration() const { return iteration_; }

  /// Trains one epoch against opponents drawn from sigma, evaluates the
  /// policy against the pool, updates sigma and (self-play) extends the pool.
  void step();

  /// Runs the remaining iterations and the final evaluation.
  PsroResult finish(const std::function<void(const PsroRunner&)>& after_iteration = {});

  const PsroConfig& config() const { return config_; }
  const PolicyPool& pool() const { return pool_; }
  const MetaStrategy& sigma() const { return sigma_; }
  const Trainer& trainer() const { return trainer_; }
  const PsroResult& partial() const { return result_; }

  /// Writes/reads everything needed to continue after `iteration()` into
  /// `dir` (trainer state, sigma, histories, self-play checkpoints).
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);

 private:
  PsroConfig config_;
  PolicyPool pool_;
  std::size_t base_pool_size_;
  Trainer trainer_;
  MetaStrategy sigma_;
  int iteration_ = 0;
  PsroResult result_;
};

PsroResult flip_psro(const PsroConfig& config, PolicyPool pool);

// ---------------------------------------------------------------------------
// Baselines

struct IbrResult {
  PolicyCheckpoint final_policy;
  std::vector<EpochStats> curve;
  std::vector<std::string> opponent_stream;
};

/// Sequential best response: trains one policy against order[k] for
/// epochs_per_opponent epochs, k = 0, 1, ...
IbrResult ibr_train(const std::vector<HeuristicSpec>& order, int epochs_per_opponent,
                    const GameConfig& game, const TrainConfig& train, std::uint64_t seed);

/// One-hot sigma schedule equivalent to ibr_train over a pool in `order`.
std::vector<MetaStrategy> ibr_schedule(std::size_t pool_size, int epochs_per_opponent);

struct SpecialistResult {
  std::string id;
  PolicyCheckpoint policy;
  double reward = 0.0;  // mean over the evaluation episodes
  double ownership = 0.0;
  std::vector<EpochStats> curve;
};

/// One independent run per heuristic member. The run for member id uses
/// seed derive_seed(seed, {hash(id)}).
std::vector<SpecialistResult> train_specialists(const PolicyPool& pool, const GameConfig& game,
                                                const TrainConfig& train, std::uint64_t seed,
                                                int eval_episodes = 100, int workers = 1);

NormGapObjective gap_objective(const std::vector<SpecialistResult>& specialists);

// ---------------------------------------------------------------------------
// Exports

/// iteration,member,value (+ reward, std, ownership) per utility entry.
void write_utilities_csv(std::ostream& os, const std::vector<UtilityRow>& rows);
/// iteration,member,probability
void write_sigma_csv(std::ostream& os, const std::vector<MetaStrategy>& sigmas,
                     const std::vector<std::vector<std::string>>& ids);
/// epoch,opponent,episodes,mean_reward,mean_ownership plus an "all" row per epoch.
void write_curve_csv(std::ostream& os, const std::vector<EpochStats>& curve);

}  // namespace poolflip
