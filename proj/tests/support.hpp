#pragma once

// Independent oracles shared by the unit tests and the acceptance gate.

#include <algorithm>
#include <cmath>
#include <vector>

#include "poolflip/engine.hpp"
#include "poolflip/heuristics.hpp"
#include "poolflip/learner.hpp"

namespace poolflip::testing {

struct GradientCheck {
  int coordinates = 0;
  double max_relative_error = 0.0;
};

// A random batch whose old log-probabilities sit near the current ones, so
// both the clipped and the unclipped branches are exercised.
inline PpoBatch random_batch(const NetworkParams& params, int n, std::uint64_t seed) {
  Rng rng(seed);
  const int obs_dim = params.shape().obs_dim;
  PpoBatch b;
  b.observations.resize(n, obs_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < obs_dim; ++j) b.observations(i, j) = rng.uniform() < 0.3 ? 1.0 : 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(b.observations.row(i).data(), b.observations.row(i).data() + obs_dim);
    const PolicyOutput out = policy_forward(params, row);
    const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(params.shape().action_dim)));
    b.actions.push_back(a);
    b.old_log_probs.push_back(std::log(out.probs[a]) + (rng.uniform() - 0.5));
    b.advantages.push_back(2.0 * rng.uniform() - 1.0);
    b.returns.push_back(3.0 * rng.uniform() - 1.0);
  }
  return b;
}

// Central differences on every coordinate whose analytic gradient is not
// negligible, until `wanted` coordinates are compared.
inline GradientCheck check_gradient(NetworkParams params, const PpoBatch& batch,
                                    const TrainConfig& config, int wanted, double step = 1e-6) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  ppo_loss(params, batch, config, &grad);
  GradientCheck result;
  for (Eigen::Index i = 0; i < grad.size() && result.coordinates < wanted; ++i) {
    if (std::abs(grad[i]) < 1e-3) continue;
    const double keep = params.values()[i];
    params.values()[i] = keep + step;
    const double up = ppo_loss(params, batch, config, nullptr).total;
    params.values()[i] = keep - step;
    const double down = ppo_loss(params, batch, config, nullptr).total;
    params.values()[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(numeric - grad[i]) / std::max(std::abs(numeric), std::abs(grad[i]));
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.coordinates;
  }
  return result;
}

// A one-step contextual bandit: constant observation, three arms with
// rewards 0, 1 and 0.2. Returns p(best arm) after `updates` PPO updates.
inline double bandit_best_probability(int updates, std::uint64_t seed) {
  NetworkShape shape{4, 3, {16}, false};
  NetworkParams params = init_network(shape, seed);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.minibatch_size = 64;
  cfg.epochs_per_update = 4;
  AdamOptimizer opt(params.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  const std::vector<double> obs{1.0, 0.0, 1.0, 0.0};
  const double reward[3] = {0.0, 1.0, 0.2};
  Rng rng(seed);
  for (int u = 0; u < updates; ++u) {
    RolloutBuffer buffer(4);
    const PolicyOutput out = policy_forward(params, obs);
    for (int e = 0; e < 64; ++e) {
      double x = rng.uniform();
      int a = 0;
      while (a < 2 && x >= out.probs[a]) x -= out.probs[a++];
      buffer.add(obs, a, std::log(out.probs[a]), out.value, reward[a], true);
    }
    ppo_update(params, opt, buffer, cfg, derive_seed(seed, {static_cast<std::uint64_t>(u)}));
  }
  return policy_forward(params, obs).probs[1];
}

// Empirical flip frequency of an Awakening defender by its clock value,
// over at least `samples` decisions taken with clock < buckets.
struct HazardEstimate {
  std::vector<long> trials;
  std::vector<long> flips;
  double rate(int t) const { return trials[t] ? static_cast<double>(flips[t]) / trials[t] : 0.0; }
};

inline HazardEstimate awakening_hazard(double lambda, long samples, int buckets, std::uint64_t seed) {
  AwakeningAgent agent(AwakeningSpec{lambda});
  GameConfig g;
  HazardEstimate h{std::vector<long>(buckets, 0), std::vector<long>(buckets, 0)};
  long total = 0;
  for (std::uint64_t e = 0; total < samples; ++e) {
    agent.reset(derive_seed(seed, {e}));
    Game game(g, e);
    while (!game.finished()) {
      const int t = agent.clock();
      const Action act = agent.act(PlayerView{game.knowledge(Player::kDefender), game.step(), g});
      if (t < buckets) {
        ++h.trials[t];
        h.flips[t] += act.is_flip();
        ++total;
      }
      game.resolve_step(act, Action::sleep());
    }
  }
  return h;
}

}  // namespace poolflip::testing
