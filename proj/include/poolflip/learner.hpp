#pragma once

// PPO best-response oracle over the engine's observation encoding.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolflip/engine.hpp"

namespace poolflip {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Network

struct NetworkShape {
  int obs_dim = 0;
  int action_dim = 0;
  std::vector<int> hidden{64, 64};
  // Shared trunk: both heads read the last hidden layer of one tower.
  // Otherwise the value head sits on its own tower of the same widths.
  bool shared_trunk = true;

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// All parameters live in one flat vector; each layer is a row-major
/// (out x in) weight block followed by its bias.
class NetworkParams {
 public:
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  NetworkParams() = default;
  explicit NetworkParams(NetworkShape shape);  // zero-filled

  const NetworkShape& shape() const { return shape_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }

  int num_layers() const { return static_cast<int>(layers_.size()); }
  int layer_in(int layer) const { return layers_[layer].in; }
  int layer_out(int layer) const { return layers_[layer].out; }
  std::size_t layer_offset(int layer) const { return layers_[layer].offset; }
  MatrixMap weight(int layer);
  ConstMatrixMap weight(int layer) const;
  VectorMap bias(int layer);
  ConstVectorMap bias(int layer) const;

  // Layer indices by role.
  int depth() const { return static_cast<int>(shape_.hidden.size()); }
  int policy_hidden(int i) const { return i; }
  int policy_head() const { return depth(); }
  int value_hidden(int i) const { return shape_.shared_trunk ? i : depth() + 1 + i; }
  int value_head() const { return shape_.shared_trunk ? depth() + 1 : 2 * depth() + 1; }

  bool all_finite() const { return values_.allFinite(); }

  /// Rounds every parameter to the nearest 32-bit float.
  void round_to_float();

 private:
  struct Layer {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;  // weight block, bias follows
  };

  NetworkShape shape_;
  std::vector<Layer> layers_;
  Eigen::VectorXd values_;
};

/// Glorot-uniform hidden layers, heads scaled down so the initial policy is
/// near uniform and the value estimate near 0. Deterministic in `seed`.
NetworkParams init_network(const NetworkShape& shape, std::uint64_t seed);

/// Activations kept for the backward pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> policy_hidden;
  std::vector<Eigen::MatrixXd> value_hidden;  // empty with a shared trunk
  Eigen::MatrixXd log_probs;                  // N x A
  Eigen::MatrixXd probs;                      // N x A
  Eigen::VectorXd values;                     // N
};

void forward(const NetworkParams& params, const Eigen::Ref<const RowMatrix>& obs,
             ForwardCache& cache);

/// Accumulates parameter gradients given d(loss)/d(logits) and
/// d(loss)/d(value); `grad` must have params.size() entries.
void backward(const NetworkParams& params, const Eigen::Ref<const RowMatrix>& obs,
              const ForwardCache& cache, const Eigen::MatrixXd& d_logits,
              const Eigen::VectorXd& d_values, Eigen::VectorXd& grad);

struct PolicyOutput {
  std::vector<double> probs;
  double value = 0.0;
};

/// Throws std::invalid_argument on a dimension mismatch.
PolicyOutput policy_forward(const NetworkParams& params, std::span<const double> observation);

// ---------------------------------------------------------------------------
// Training configuration

struct TrainConfig {
  double learning_rate = 1e-3;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_epsilon = 0.2;
  int epochs_per_update = 4;
  int episodes_per_update = 10;
  int minibatch_size = 250;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.0;  // 0 disables clipping
  bool normalize_advantages = true;
  std::vector<int> hidden{64, 64};
  bool shared_trunk = false;
  int total_epochs = 200;
  int episodes_per_epoch = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Unknown keys are rejected with ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// ---------------------------------------------------------------------------
// Rollouts

/// Per-step records gathered by a NeuralPolicy while it plays.
struct Trajectory {
  std::vector<double> observations;  // flattened, obs_dim per step
  std::vector<int> actions;
  std::vector<double> log_probs;
  std::vector<double> values;

  std::size_t steps() const { return actions.size(); }
  void clear();
};

class RolloutBuffer {
 public:
  explicit RolloutBuffer(int obs_dim = 0) : obs_dim_(obs_dim) {}

  /// Appends one whole episode; rewards[i] belongs to step i.
  void add_episode(const Trajectory& trajectory, std::span<const double> rewards);

  /// Appends a single transition; `episode_end` closes the current episode.
  void add(std::span<const double> observation, int action, double log_prob, double value,
           double reward, bool episode_end);

  void clear();

  int obs_dim() const { return obs_dim_; }
  std::size_t size() const { return actions_.size(); }
  bool empty() const { return actions_.empty(); }
  int episodes() const { return episodes_; }

  Eigen::Map<const RowMatrix> observations() const {
    return {observations_.data(), static_cast<Eigen::Index>(size()), obs_dim_};
  }
  std::span<const int> actions() const { return actions_; }
  std::span<const double> log_probs() const { return log_probs_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> rewards() const { return rewards_; }
  /// True on the last step of each episode.
  const std::vector<bool>& episode_ends() const { return episode_ends_; }

 private:
  int obs_dim_;
  int episodes_ = 0;
  std::vector<double> observations_;
  std::vector<int> actions_;
  std::vector<double> log_probs_;
  std::vector<double> values_;
  std::vector<double> rewards_;
  std::vector<bool> episode_ends_;
};

struct Advantages {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

/// Generalized advantage estimates with no bootstrapping across episode
/// boundaries (episodes end at the horizon, so the value after the last step
/// is 0). Throws std::invalid_argument on an empty buffer or a trailing
/// partial episode.
Advantages compute_advantages(const RolloutBuffer& buffer, double gamma, double lambda);

// ---------------------------------------------------------------------------
// PPO objective and update

/// A gathered batch of transitions.
struct PpoBatch {
  RowMatrix observations;
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const { return actions.size(); }
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

/// Mean clipped-surrogate loss + value_coef * MSE - entropy_coef * entropy.
/// Writes d(total)/d(params) into *grad when non-null.
LossStats ppo_loss(const NetworkParams& params, const PpoBatch& batch, const TrainConfig& config,
                   Eigen::VectorXd* grad);

class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(std::size_t size, double lr, double beta1, double beta2, double epsilon);

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  long steps() const { return steps_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  void restore(long steps, Eigen::VectorXd m, Eigen::VectorXd v);

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double epsilon_ = 1e-8;
  long steps_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

struct UpdateStats {
  LossStats first;  // before the first optimizer step
  LossStats last;   // last minibatch of the last pass
  int optimizer_steps = 0;
  double grad_norm = 0.0;
};

/// epochs_per_update passes over the buffer in shuffled minibatches.
/// Throws TrainingError on a non-finite loss or gradient; `params` is left
/// unchanged in that case.
UpdateStats ppo_update(NetworkParams& params, AdamOptimizer& optimizer,
                       const RolloutBuffer& buffer, const TrainConfig& config,
                       std::uint64_t shuffle_seed);

// ---------------------------------------------------------------------------
// Acting

class NeuralPolicy final : public Policy {
 public:
  enum class Mode { kSample, kGreedy };

  NeuralPolicy(std::shared_ptr<const NetworkParams> params, int memory_limit,
               Mode mode = Mode::kSample, std::string id = "ppo");

  void reset(std::uint64_t seed) override { rng_.seed(seed); }
  Action act(const PlayerView& view) override;
  std::string id() const override { return id_; }

  /// While attached, every act() appends to `trajectory`.
  void record_into(Trajectory* trajectory) { recorder_ = trajectory; }

 private:
  std::shared_ptr<const NetworkParams> params_;
  int memory_limit_;
  Mode mode_;
  std::string id_;
  Rng rng_;
  Trajectory* recorder_ = nullptr;
  std::vector<double> obs_;
  ForwardCache cache_;
};

// ---------------------------------------------------------------------------
// Checkpoints

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kMagic, kVersion, kTruncated, kCorrupt, kDimension };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct PolicyCheckpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  NetworkParams params;
  int memory_limit = 16;
  int num_resources = 1;
  nlohmann::json metadata = nlohmann::json::object();

  /// Throws CheckpointError(kDimension) unless the network fits `config`.
  void check_compatible(const GameConfig& config) const;
};

/// Binary layout (little-endian): magic "PFLIPCKP", u32 version, u32 obs_dim,
/// u32 action_dim, u32 memory_limit, u32 num_resources, u32 shared_trunk,
/// u32 hidden count, u32 widths..., u64 parameter count, f32 parameters in
/// row-major layer order.
std::string serialize_checkpoint(const PolicyCheckpoint& checkpoint);
PolicyCheckpoint deserialize_checkpoint(std::string_view bytes);

/// Git blob hash (SHA-1 over "blob <size>\0" + bytes), lowercase hex.
std::string content_hash(std::string_view bytes);

/// Writes `path` and a `path.json` metadata sidecar.
void save_checkpoint(const PolicyCheckpoint& checkpoint, const std::filesystem::path& path);
PolicyCheckpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Training loop

/// A pool entry able to produce fresh policy instances.
struct OpponentFactory {
  std::string id;
  std::function<std::unique_ptr<Policy>()> make;
};

/// Chooses the opponent index for the next training episode.
using OpponentPicker = std::function<std::size_t(Rng&)>;

struct OpponentScore {
  std::string id;
  int episodes = 0;
  double mean_reward = 0.0;
  double mean_ownership = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double mean_ownership = 0.0;
  std::vector<OpponentScore> per_opponent;  // in opponent-list order, only those played
  UpdateStats last_update;
};

nlohmann::json to_json(const EpochStats& stats);
EpochStats epoch_stats_from_json(const nlohmann::json& j);

/// Owns the learning policy and optimizer state. Every episode and update
/// draws its randomness from streams derived from (seed, epoch, index), so
/// training is reproducible and resumable at epoch boundaries.
class Trainer {
 public:
  Trainer(GameConfig game, TrainConfig train, std::uint64_t seed);

  /// Plays episodes_per_epoch episodes as defender against opponents chosen
  /// by `pick`, updating every episodes_per_update episodes.
  EpochStats run_epoch(std::span<const OpponentFactory> opponents, const OpponentPicker& pick);

  int epochs_done() const { return epoch_; }
  const NetworkParams& params() const { return *params_; }
  std::shared_ptr<const NetworkParams> params_snapshot() const;
  const GameConfig& game_config() const { return game_; }
  const TrainConfig& train_config() const { return train_; }
  std::uint64_t seed() const { return seed_; }

  /// Opponent id of every training episode so far, in order.
  const std::vector<std::string>& opponent_stream() const { return stream_; }

  PolicyCheckpoint checkpoint(nlohmann::json metadata = nlohmann::json::object()) const;

  /// Full optimizer state for --resume (binary, same endianness rules as
  /// checkpoints).
  std::string save_state() const;
  void load_state(std::string_view bytes);

 private:
  GameConfig game_;
  TrainConfig train_;
  std::uint64_t seed_;
  std::shared_ptr<NetworkParams> params_;
  AdamOptimizer optimizer_;
  RolloutBuffer buffer_;
  int epoch_ = 0;
  long updates_ = 0;
  std::vector<std::string> stream_;
};

/// Trains a fresh policy for train.total_epochs epochs against opponents
/// chosen by `pick`. Returns the learning curve.
std::vector<EpochStats> train_against(Trainer& trainer, std::span<const OpponentFactory> opponents,
                                      const OpponentPicker& pick);

}  // namespace poolflip
