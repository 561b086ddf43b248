#pragma once

// Rule-based PoolFlip agents and their compact text identifiers, e.g.
//   sleep | random:p=0.33 | periodic:phase=4,delay=random
//   burst:phase=8,delay=random,burst=3 | awake:lambda=0.05 | reta:phase=4
//   pc:phase=4 | pac:phase=4 | upac
// Periodic and Burst delays default to "random" (uniform over
// {0, ..., phase-1}, redrawn at every reset); PC and PAC start checking at
// step 0 unless a delay is given. Agents act on resource 0.

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "poolflip/engine.hpp"

namespace poolflip {

/// Malformed or out-of-range heuristic identifier; token() names the
/// offending piece of text.
class SpecError : public std::invalid_argument {
 public:
  SpecError(std::string token, const std::string& what)
      : std::invalid_argument(what), token_(std::move(token)) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

// std::nullopt delay means "random".
using Delay = std::optional<int>;

struct SleepOnlySpec {};
struct RandomSpec {
  double flip_prob = 0.33;
};
struct PeriodicSpec {
  int phase = 4;
  Delay delay;
};
struct BurstSpec {
  int phase = 8;
  Delay delay;
  int burst = 3;
};
struct AwakeningSpec {
  double lambda = 0.05;
};
struct RetaliatingSpec {
  int phase = 4;
};
struct PeriodicCheckSpec {
  int phase = 4;
  Delay delay = 0;
};
struct PacSpec {
  int phase = 4;
  Delay delay = 0;
};

using HeuristicSpec =
    std::variant<SleepOnlySpec, RandomSpec, PeriodicSpec, BurstSpec,
                 AwakeningSpec, RetaliatingSpec, PeriodicCheckSpec, PacSpec>;

/// Throws SpecError.
HeuristicSpec parse_heuristic(std::string_view text);
std::vector<HeuristicSpec> parse_heuristic_list(std::string_view text);

/// Canonical identifier; parse_heuristic(format_heuristic(s)) == s.
std::string format_heuristic(const HeuristicSpec& spec);

/// Short label in the style of result tables: "Periodic(4)", "Burst(8,3)".
std::string display_name(const HeuristicSpec& spec);

/// Throws SpecError when a parameter is out of range.
void validate(const HeuristicSpec& spec);

bool operator==(const HeuristicSpec& a, const HeuristicSpec& b);

/// Grammar summary for --help output.
std::string heuristic_grammar();

std::unique_ptr<Policy> make_heuristic(const HeuristicSpec& spec,
                                       std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Agents. Each keeps its own clock and reacts only to its own knowledge.

class SleepOnlyAgent final : public Policy {
 public:
  void reset(std::uint64_t) override {}
  Action act(const PlayerView&) override { return Action::sleep(); }
  std::string id() const override { return "sleep"; }
};

class RandomAgent final : public Policy {
 public:
  explicit RandomAgent(RandomSpec spec, std::uint64_t seed = 0);
  void reset(std::uint64_t seed) override { rng_.seed(seed); }
  Action act(const PlayerView& view) override;
  std::string id() const override { return format_heuristic(spec_); }

 private:
  RandomSpec spec_;
  Rng rng_;
};

/// Flips at delay, delay + phase, delay + 2 phase, ...
class PeriodicAgent final : public Policy {
 public:
  explicit PeriodicAgent(PeriodicSpec spec, std::uint64_t seed = 0);
  void reset(std::uint64_t seed) override;
  Action act(const PlayerView& view) override;
  std::string id() const override { return format_heuristic(spec_); }
  int delay() const { return delay_; }

 private:
  PeriodicSpec spec_;
  int delay_ = 0;
};

/// After the delay, repeats [Flip x burst, Sleep x (phase - 1)].
class BurstAgent final : public Policy {
 public:
  explicit BurstAgent(BurstSpec spec, std::uint64_t seed = 0);
  void reset(std::uint64_t seed) override;
  Action act(const PlayerView& view) override;
  std::string id() const override { return format_heuristic(spec_); }
  int delay() const { return delay_; }

 private:
  BurstSpec spec_;
  int delay_ = 0;
};

/// Flips with probability 1 - exp(-lambda t), where t counts the Sleep steps
/// since its own last Flip: 0 at the first step of an episode and on the step
/// right after each Flip.
class AwakeningAgent final : public Policy {
 public:
  explicit AwakeningAgent(AwakeningSpec spec, std::uint64_t seed = 0);
  void reset(std::uint64_t seed) override;
  Action act(const PlayerView& view) override;
  std::string id() const override { return format_heuristic(spec_); }

  double flip_probability(int t) const;
  int clock() const { return clock_; }

 private:
  AwakeningSpec spec_;
  Rng rng_;
  int clock_ = 0;
};

/// Periodic flipping (first Flip at step 0) with an adaptive phase. Each of
/// its own Flips reveals whether the opponent flipped since its previous
/// Flip: if so the effective phase is halved (floor, at least 1), otherwise
/// it grows by one step back toward the starting phase.
class RetaliatingAgent final : public Policy {
 public:
  explicit RetaliatingAgent(RetaliatingSpec spec, std::uint64_t seed = 0);
  void reset(std::uint64_t seed) override;
  Action act(const PlayerView& view) override;
  std::string id() const override { return format_heuristic(spec_); }

  int effective_phase() const { return phase_; }
  int min_phase() const { return std::max(1, spec_.phase / 2); }

 private:
  RetaliatingSpec spec_;
  int phase_ = 1;
  std::optional<int> last_flip_;
  std::optional<int> previous_flip_;
  bool pending_review_ = false;
};

/// Checks at delay + k phase. A Check that shows the opponent in control
/// arms a Flip: Periodic Check spends its next scheduled slot on it, the
/// aggressive variant flips on the very next step.
class CheckingAgent final : public Policy {
 public:
  CheckingAgent(int phase, Delay delay, bool aggressive, std::uint64_t seed = 0);
  void reset(std::uint64_t seed) override;
  Action act(const PlayerView& view) override;
  std::string id() const override;
  int delay() const { return delay_; }

 private:
  bool on_schedule(int step) const {
    return step >= delay_ && (step - delay_) % phase_ == 0;
  }

  int phase_;
  Delay delay_spec_;
  bool aggressive_;
  int delay_ = 0;
  std::optional<int> last_check_;
  bool flip_armed_ = false;
};

}  // namespace poolflip
