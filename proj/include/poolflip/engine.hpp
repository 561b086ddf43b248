#pragma once

// PoolFlip game engine: a stealthy-takeover game over R resources played by
// a defender and an attacker with simultaneous moves.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "poolflip/rng.hpp"

namespace poolflip {

enum class Player : std::uint8_t { kDefender = 0, kAttacker = 1 };

inline constexpr int kNumPlayers = 2;

constexpr Player opponent_of(Player p) {
  return p == Player::kDefender ? Player::kAttacker : Player::kDefender;
}
constexpr int index_of(Player p) { return static_cast<int>(p); }

std::string_view to_string(Player p);
char player_symbol(Player p);  // 'D' or 'A'

// ---------------------------------------------------------------------------
// Errors

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A policy returned an action outside the action space.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(Player player, const std::string& what)
      : std::runtime_error(what), player_(player) {}
  Player player() const { return player_; }

 private:
  Player player_;
};

// ---------------------------------------------------------------------------
// Actions

struct Action {
  enum class Kind : std::uint8_t { kSleep, kFlip, kCheck };

  Kind kind = Kind::kSleep;
  int resource = 0;  // ignored for Sleep

  static constexpr Action sleep() { return {Kind::kSleep, 0}; }
  static constexpr Action flip(int r) { return {Kind::kFlip, r}; }
  static constexpr Action check(int r) { return {Kind::kCheck, r}; }

  bool is_sleep() const { return kind == Kind::kSleep; }
  bool is_flip() const { return kind == Kind::kFlip; }
  bool is_check() const { return kind == Kind::kCheck; }
  bool targets(int r) const { return kind != Kind::kSleep && resource == r; }

  friend bool operator==(const Action& a, const Action& b) {
    if (a.kind != b.kind) return false;
    return a.kind == Kind::kSleep || a.resource == b.resource;
  }
};

// Flat layout: [Sleep, Flip r0, Check r0, ..., Flip r(R-1), Check r(R-1)].
constexpr int action_count(int num_resources) { return 1 + 2 * num_resources; }
int encode_action(Action action, int num_resources);
Action decode_action(int index, int num_resources);
bool is_valid(Action action, int num_resources);

char action_symbol(Action action);       // 'S', 'F' or 'C'
std::string to_string(Action action);    // "sleep", "flip0", "check0"
Action parse_action(std::string_view s); // inverse of to_string

// ---------------------------------------------------------------------------
// Configuration

struct ActionCosts {
  double sleep = 0.0;
  double check = 1.0;
  double flip = 2.0;

  double of(Action::Kind kind) const;
};

struct GameConfig {
  int horizon = 100;
  int num_resources = 1;
  int memory_limit = 16;
  std::array<ActionCosts, kNumPlayers> costs{};
  std::array<double, kNumPlayers> gain{1.0, 1.0};
  Player initial_owner = Player::kDefender;
  std::uint64_t base_seed = 0;

  /// Throws ConfigError describing the first violated constraint.
  void validate() const;

  int observation_size() const { return (2 + 2 * memory_limit) * num_resources; }
  int num_actions() const { return action_count(num_resources); }

  /// Same costs and gain for both players.
  void set_symmetric(ActionCosts c, double g) {
    costs = {c, c};
    gain = {g, g};
  }
};

// ---------------------------------------------------------------------------
// Knowledge

/// What a player believes about one resource. Event times are stored as
/// absolute step indices; "time since" values are derived against the
/// current step, so every counter ages by one per step until refreshed.
struct ResourceKnowledge {
  std::optional<int> own_flip_step;          // exact, never stale
  std::optional<Player> observed_owner;      // as of the last Flip/Check
  std::optional<int> observed_capture_step;  // capture step of observed_owner
  std::optional<int> opponent_flip_step;     // latest opponent Flip revealed
  std::optional<int> observed_at;            // step of the last Flip/Check
  bool believes_owned = false;
};

struct KnowledgeState {
  Player self = Player::kDefender;
  std::vector<ResourceKnowledge> resources;

  static std::optional<int> since(std::optional<int> event_step, int now) {
    if (!event_step) return std::nullopt;
    return now - *event_step;
  }
};

/// Information handed to a player that Flipped or Checked a resource.
/// Reflects the state after the step's simultaneous moves settle.
struct Reveal {
  int resource = 0;
  Player owner = Player::kDefender;
  int capture_step = 0;
  std::optional<int> opponent_flip_step;
};

// ---------------------------------------------------------------------------
// Observation encoding

/// Writes the one-hot encoding of `knowledge` at step `now` into `out`
/// (length (2 + 2M) R). Per resource: block A is the time since the player's
/// own last Flip, block B the time since the opponent's last revealed Flip;
/// each block holds M clamped buckets min(dt, M - 1) plus an unknown cell.
void encode_observation(const KnowledgeState& knowledge, int now,
                        int memory_limit, std::span<double> out);

std::vector<double> encode_observation(const KnowledgeState& knowledge,
                                       int now, int memory_limit);

// ---------------------------------------------------------------------------
// Engine state and step resolution

struct StepOutcome {
  int step = 0;
  std::array<Action, kNumPlayers> actions{};
  std::vector<Player> owners;  // post-resolution
  std::array<double, kNumPlayers> rewards{};
  std::array<std::vector<Reveal>, kNumPlayers> reveals;
  std::vector<bool> contested;  // two or more contestants
};

/// Owner update for one resource: unchanged when nobody contests or the
/// previous owner is among the contestants, otherwise drawn uniformly from
/// the contestants. The generator is consumed only for a draw over two or
/// more contestants.
Player resolve_owner(Player previous, std::span<const Player> contestants,
                     Rng& rng);

class Game {
 public:
  /// Starts a game at t = 0 with every resource owned by the configured
  /// initial owner (captured at step 0). Throws ConfigError.
  explicit Game(GameConfig config, std::uint64_t seed = 0);

  const GameConfig& config() const { return config_; }
  int step() const { return t_; }
  bool finished() const { return t_ >= config_.horizon; }

  Player owner(int resource) const { return owner_.at(resource); }
  int last_capture_time(int resource) const { return capture_.at(resource); }
  const KnowledgeState& knowledge(Player p) const {
    return knowledge_[index_of(p)];
  }

  std::vector<double> observe(Player p) const;

  /// Resolves one simultaneous move. Throws StateError after the horizon
  /// and ProtocolError for actions outside the action space.
  StepOutcome resolve_step(Action defender, Action attacker);

 private:
  GameConfig config_;
  int t_ = 0;
  std::vector<Player> owner_;
  std::vector<int> capture_;
  std::vector<std::array<std::optional<int>, kNumPlayers>> last_flip_;
  std::array<KnowledgeState, kNumPlayers> knowledge_;
  Rng rng_;
};

// ---------------------------------------------------------------------------
// Policies and episodes

struct PlayerView {
  const KnowledgeState& knowledge;
  int step;
  const GameConfig& config;
};

/// The act contract: a policy sees only its own knowledge and the clock.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset(std::uint64_t seed) = 0;
  virtual Action act(const PlayerView& view) = 0;
  virtual std::string id() const = 0;
};

struct EpisodeSeeds {
  std::uint64_t engine = 0;
  std::uint64_t defender = 0;
  std::uint64_t attacker = 0;

  /// Independent per-role streams from one episode seed.
  static EpisodeSeeds derive(std::uint64_t episode_seed);
};

struct TraceStep {
  std::array<Action, kNumPlayers> actions{};
  std::vector<Player> owners;
  std::array<double, kNumPlayers> rewards{};
};

struct EpisodeResult {
  std::array<double, kNumPlayers> total_reward{};
  std::array<std::vector<double>, kNumPlayers> ownership;  // per resource
  std::array<std::vector<int>, kNumPlayers> action_counts; // by flat index
  std::vector<TraceStep> trace;                            // may be empty
  EpisodeSeeds seeds;

  double defender_reward() const { return total_reward[0]; }
  double defender_ownership(int resource = 0) const {
    return ownership[0].at(resource);
  }
};

EpisodeResult run_episode(const GameConfig& config, Policy& defender,
                          Policy& attacker, const EpisodeSeeds& seeds,
                          bool keep_trace = true);

EpisodeResult run_episode(const GameConfig& config, Policy& defender,
                          Policy& attacker, std::uint64_t seed,
                          bool keep_trace = true);

/// Fraction of trace steps in which `player` owns `resource` after
/// resolution.
double ownership_fraction(std::span<const TraceStep> trace, Player player,
                          int resource);

/// One row per step: step, defender_action, attacker_action, owners,
/// defender_reward, attacker_reward. Owners are joined with ';'.
void write_trace_csv(std::ostream& os, std::span<const TraceStep> trace);

}  // namespace poolflip
