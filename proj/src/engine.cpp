#include "poolflip/engine.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace poolflip {

std::string_view to_string(Player p) {
  return p == Player::kDefender ? "defender" : "attacker";
}

char player_symbol(Player p) { return p == Player::kDefender ? 'D' : 'A'; }

// ---------------------------------------------------------------------------
// Actions

bool is_valid(Action action, int num_resources) {
  if (action.is_sleep()) return true;
  return action.resource >= 0 && action.resource < num_resources;
}

int encode_action(Action action, int num_resources) {
  if (num_resources < 1) throw std::out_of_range("encode_action: no resources");
  if (!is_valid(action, num_resources)) {
    throw std::out_of_range("encode_action: resource " +
                            std::to_string(action.resource) +
                            " outside [0, " + std::to_string(num_resources) +
                            ")");
  }
  switch (action.kind) {
    case Action::Kind::kSleep: return 0;
    case Action::Kind::kFlip: return 1 + 2 * action.resource;
    case Action::Kind::kCheck: return 2 + 2 * action.resource;
  }
  return 0;
}

Action decode_action(int index, int num_resources) {
  if (num_resources < 1 || index < 0 || index >= action_count(num_resources)) {
    throw std::out_of_range("decode_action: index " + std::to_string(index) +
                            " outside [0, " +
                            std::to_string(action_count(num_resources)) + ")");
  }
  if (index == 0) return Action::sleep();
  const int r = (index - 1) / 2;
  return (index - 1) % 2 == 0 ? Action::flip(r) : Action::check(r);
}

char action_symbol(Action action) {
  switch (action.kind) {
    case Action::Kind::kSleep: return 'S';
    case Action::Kind::kFlip: return 'F';
    case Action::Kind::kCheck: return 'C';
  }
  return '?';
}

std::string to_string(Action action) {
  switch (action.kind) {
    case Action::Kind::kSleep: return "sleep";
    case Action::Kind::kFlip: return "flip" + std::to_string(action.resource);
    case Action::Kind::kCheck: return "check" + std::to_string(action.resource);
  }
  return "?";
}

Action parse_action(std::string_view s) {
  if (s == "sleep") return Action::sleep();
  auto parse_index = [&](std::string_view digits) {
    if (digits.empty()) throw std::invalid_argument("bad action: " + std::string(s));
    int r = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') throw std::invalid_argument("bad action: " + std::string(s));
      r = r * 10 + (c - '0');
    }
    return r;
  };
  if (s.starts_with("flip")) return Action::flip(parse_index(s.substr(4)));
  if (s.starts_with("check")) return Action::check(parse_index(s.substr(5)));
  throw std::invalid_argument("bad action: " + std::string(s));
}

double ActionCosts::of(Action::Kind kind) const {
  switch (kind) {
    case Action::Kind::kSleep: return sleep;
    case Action::Kind::kFlip: return flip;
    case Action::Kind::kCheck: return check;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Configuration

void GameConfig::validate() const {
  if (horizon < 1) {
    throw ConfigError("horizon must be >= 1 (got " + std::to_string(horizon) + ")");
  }
  if (num_resources < 1) {
    throw ConfigError("num_resources must be >= 1 (got " +
                      std::to_string(num_resources) + ")");
  }
  if (memory_limit < 1) {
    throw ConfigError("memory_limit must be >= 1 (got " +
                      std::to_string(memory_limit) + ")");
  }
  for (int p = 0; p < kNumPlayers; ++p) {
    const auto& c = costs[p];
    for (double v : {c.sleep, c.check, c.flip}) {
      if (!std::isfinite(v) || v < 0.0) {
        throw ConfigError("action costs must be finite and non-negative");
      }
    }
    if (!std::isfinite(gain[p])) throw ConfigError("gain must be finite");
  }
}

// ---------------------------------------------------------------------------
// Observation encoding

namespace {

void encode_block(std::optional<int> since, int memory_limit,
                  std::span<double> block) {
  std::fill(block.begin(), block.end(), 0.0);
  if (!since) {
    block[memory_limit] = 1.0;
    return;
  }
  block[std::clamp(*since, 0, memory_limit - 1)] = 1.0;
}

}  // namespace

void encode_observation(const KnowledgeState& knowledge, int now,
                        int memory_limit, std::span<double> out) {
  const std::size_t per_resource = 2 + 2 * static_cast<std::size_t>(memory_limit);
  if (out.size() != per_resource * knowledge.resources.size()) {
    throw std::invalid_argument("encode_observation: output size mismatch");
  }
  const std::size_t block = per_resource / 2;
  for (std::size_t r = 0; r < knowledge.resources.size(); ++r) {
    const auto& k = knowledge.resources[r];
    auto row = out.subspan(r * per_resource, per_resource);
    encode_block(KnowledgeState::since(k.own_flip_step, now), memory_limit,
                 row.first(block));
    encode_block(KnowledgeState::since(k.opponent_flip_step, now),
                 memory_limit, row.last(block));
  }
}

std::vector<double> encode_observation(const KnowledgeState& knowledge,
                                       int now, int memory_limit) {
  std::vector<double> out((2 + 2 * memory_limit) * knowledge.resources.size());
  encode_observation(knowledge, now, memory_limit, out);
  return out;
}

// ---------------------------------------------------------------------------
// Engine

Player resolve_owner(Player previous, std::span<const Player> contestants,
                     Rng& rng) {
  if (contestants.empty()) return previous;
  if (std::find(contestants.begin(), contestants.end(), previous) !=
      contestants.end()) {
    return previous;
  }
  if (contestants.size() == 1) return contestants.front();
  return contestants[rng.below(contestants.size())];
}

Game::Game(GameConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed) {
  config_.validate();
  const auto R = static_cast<std::size_t>(config_.num_resources);
  owner_.assign(R, config_.initial_owner);
  capture_.assign(R, 0);
  last_flip_.assign(R, {});
  for (int p = 0; p < kNumPlayers; ++p) {
    auto& k = knowledge_[p];
    k.self = static_cast<Player>(p);
    k.resources.assign(R, ResourceKnowledge{});
    if (k.self == config_.initial_owner) {
      for (auto& rk : k.resources) {
        rk.observed_owner = k.self;
        rk.observed_capture_step = 0;
        rk.believes_owned = true;
      }
    }
  }
}

std::vector<double> Game::observe(Player p) const {
  return encode_observation(knowledge(p), t_, config_.memory_limit);
}

StepOutcome Game::resolve_step(Action defender, Action attacker) {
  if (finished()) {
    throw StateError("resolve_step: episode finished at t=" + std::to_string(t_));
  }
  const std::array<Action, kNumPlayers> actions{defender, attacker};
  for (int p = 0; p < kNumPlayers; ++p) {
    if (!is_valid(actions[p], config_.num_resources)) {
      const auto player = static_cast<Player>(p);
      throw ProtocolError(player, std::string(to_string(player)) +
                                      " chose invalid action " +
                                      to_string(actions[p]));
    }
  }

  StepOutcome out;
  out.step = t_;
  out.actions = actions;
  out.contested.assign(owner_.size(), false);

  std::array<Player, kNumPlayers> contestants{};
  for (std::size_t r = 0; r < owner_.size(); ++r) {
    std::size_t n = 0;
    for (int p = 0; p < kNumPlayers; ++p) {
      if (actions[p].is_flip() && actions[p].resource == static_cast<int>(r)) {
        contestants[n++] = static_cast<Player>(p);
        last_flip_[r][p] = t_;
      }
    }
    out.contested[r] = n >= 2;
    const Player next =
        resolve_owner(owner_[r], std::span(contestants.data(), n), rng_);
    if (next != owner_[r]) {
      owner_[r] = next;
      capture_[r] = t_;
    }
  }
  out.owners = owner_;

  for (int p = 0; p < kNumPlayers; ++p) {
    const auto self = static_cast<Player>(p);
    double owned_gain = 0.0;
    for (Player o : owner_) {
      if (o == self) owned_gain += config_.gain[p];
    }
    out.rewards[p] = owned_gain - config_.costs[p].of(actions[p].kind);

    const Action a = actions[p];
    if (a.is_sleep()) continue;
    auto& k = knowledge_[p].resources[a.resource];
    if (a.is_flip()) k.own_flip_step = t_;
    Reveal rev;
    rev.resource = a.resource;
    rev.owner = owner_[a.resource];
    rev.capture_step = capture_[a.resource];
    rev.opponent_flip_step = last_flip_[a.resource][index_of(opponent_of(self))];
    k.observed_owner = rev.owner;
    k.observed_capture_step = rev.capture_step;
    if (rev.opponent_flip_step) k.opponent_flip_step = rev.opponent_flip_step;
    k.observed_at = t_;
    k.believes_owned = rev.owner == self;
    out.reveals[p].push_back(rev);
  }

  ++t_;
  return out;
}

// ---------------------------------------------------------------------------
// Episodes

EpisodeSeeds EpisodeSeeds::derive(std::uint64_t episode_seed) {
  return {derive_seed(episode_seed, {0}), derive_seed(episode_seed, {1}),
          derive_seed(episode_seed, {2})};
}

EpisodeResult run_episode(const GameConfig& config, Policy& defender,
                          Policy& attacker, std::uint64_t seed,
                          bool keep_trace) {
  return run_episode(config, defender, attacker, EpisodeSeeds::derive(seed),
                     keep_trace);
}

EpisodeResult run_episode(const GameConfig& config, Policy& defender,
                          Policy& attacker, const EpisodeSeeds& seeds,
                          bool keep_trace) {
  Game game(config, seeds.engine);
  defender.reset(seeds.defender);
  attacker.reset(seeds.attacker);

  const auto R = static_cast<std::size_t>(config.num_resources);
  EpisodeResult result;
  result.seeds = seeds;
  std::array<std::vector<int>, kNumPlayers> owned_steps;
  for (int p = 0; p < kNumPlayers; ++p) {
    owned_steps[p].assign(R, 0);
    result.action_counts[p].assign(config.num_actions(), 0);
  }
  if (keep_trace) result.trace.reserve(config.horizon);

  while (!game.finished()) {
    const int t = game.step();
    const Action d =
        defender.act({game.knowledge(Player::kDefender), t, config});
    const Action a =
        attacker.act({game.knowledge(Player::kAttacker), t, config});
    StepOutcome out = game.resolve_step(d, a);
    for (int p = 0; p < kNumPlayers; ++p) {
      result.total_reward[p] += out.rewards[p];
      ++result.action_counts[p][encode_action(out.actions[p], config.num_resources)];
      for (std::size_t r = 0; r < R; ++r) {
        if (out.owners[r] == static_cast<Player>(p)) ++owned_steps[p][r];
      }
    }
    if (keep_trace) {
      result.trace.push_back({out.actions, std::move(out.owners), out.rewards});
    }
  }

  for (int p = 0; p < kNumPlayers; ++p) {
    result.ownership[p].resize(R);
    for (std::size_t r = 0; r < R; ++r) {
      result.ownership[p][r] =
          static_cast<double>(owned_steps[p][r]) / config.horizon;
    }
  }
  return result;
}

double ownership_fraction(std::span<const TraceStep> trace, Player player,
                          int resource) {
  if (trace.empty()) return 0.0;
  std::size_t owned = 0;
  for (const auto& s : trace) {
    if (s.owners.at(resource) == player) ++owned;
  }
  return static_cast<double>(owned) / static_cast<double>(trace.size());
}

void write_trace_csv(std::ostream& os, std::span<const TraceStep> trace) {
  os << "step,defender_action,attacker_action,owners,defender_reward,"
        "attacker_reward\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto& s = trace[t];
    os << t << ',' << to_string(s.actions[0]) << ',' << to_string(s.actions[1])
       << ',';
    for (std::size_t r = 0; r < s.owners.size(); ++r) {
      if (r) os << ';';
      os << player_symbol(s.owners[r]);
    }
    os << ',' << s.rewards[0] << ',' << s.rewards[1] << '\n';
  }
}

}  // namespace poolflip
