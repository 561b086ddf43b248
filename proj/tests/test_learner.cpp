#include "poolflip/learner.hpp"

#include "doctest.h"
#include "poolflip/heuristics.hpp"
#include "support.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace poolflip;
namespace fs = std::filesystem;

namespace {

NetworkParams small_network(bool shared, std::uint64_t seed = 3) {
  return init_network(NetworkShape{6, 3, {8, 8}, shared}, seed);
}

TrainConfig tiny_training() {
  TrainConfig c;
  c.episodes_per_epoch = 10;
  c.episodes_per_update = 5;
  c.minibatch_size = 50;
  c.epochs_per_update = 2;
  c.hidden = {8};
  c.total_epochs = 2;
  return c;
}

GameConfig short_game() {
  GameConfig g;
  g.horizon = 20;
  return g;
}

std::vector<OpponentFactory> periodic_opponent() {
  return {{"periodic:phase=4,delay=random",
           [] { return make_heuristic(parse_heuristic("periodic:phase=4")); }}};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("poolflip_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("network layout") {
  const NetworkParams sep = small_network(false);
  CHECK(sep.num_layers() == 6);
  CHECK(sep.size() == (6 * 8 + 8) + (8 * 8 + 8) + (8 * 3 + 3) + (6 * 8 + 8) + (8 * 8 + 8) + (8 + 1));
  CHECK(sep.value_head() == 5);
  const NetworkParams shared = small_network(true);
  CHECK(shared.num_layers() == 4);
  CHECK(shared.value_head() == 3);
  CHECK(shared.layer_in(shared.value_head()) == 8);

  CHECK_THROWS(init_network(NetworkShape{6, 3, {}, false}, 0));

  const PolicyOutput out = policy_forward(sep, std::vector<double>(6, 1.0));
  double total = 0.0;
  for (double p : out.probs) total += p;
  CHECK(total == doctest::Approx(1.0));
  CHECK(std::abs(out.probs[0] - 1.0 / 3.0) < 0.05);
  CHECK_THROWS_AS(policy_forward(sep, std::vector<double>(5, 1.0)), std::invalid_argument);
}

TEST_CASE("analytic gradient matches central differences") {
  TrainConfig cfg;
  for (bool shared : {false, true}) {
    CAPTURE(shared);
    const NetworkParams p = init_network(NetworkShape{12, 3, {32, 32}, shared}, 3);
    const PpoBatch batch = testing::random_batch(p, 128, 11);
    const auto result = testing::check_gradient(p, batch, cfg, 120);
    CHECK(result.coordinates >= 100);
    CHECK(result.max_relative_error <= 1e-4);
  }
}

TEST_CASE("clipped branch carries no policy gradient") {
  NetworkParams p = small_network(false);
  PpoBatch batch = testing::random_batch(p, 10, 5);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<double> row(batch.observations.row(i).data(),
                            batch.observations.row(i).data() + 6);
    const double logp = std::log(policy_forward(p, row).probs[batch.actions[i]]);
    batch.old_log_probs[i] = logp - 1.0;  // ratio e > 1 + epsilon
    batch.advantages[i] = 1.0;            // positive advantage: clipped branch
  }
  TrainConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  cfg.normalize_advantages = false;
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
  const LossStats s = ppo_loss(p, batch, cfg, &grad);
  CHECK(s.clip_fraction == doctest::Approx(1.0));
  CHECK(s.policy_loss == doctest::Approx(-(1.0 + cfg.clip_epsilon)));
  CHECK(grad.norm() == 0.0);
}

TEST_CASE("GAE over a three-step episode") {
  RolloutBuffer buffer(1);
  const std::vector<double> obs{0.0};
  buffer.add(obs, 0, 0.0, 0.5, 1.0, false);
  buffer.add(obs, 0, 0.0, 0.2, 0.0, false);
  buffer.add(obs, 0, 0.0, 0.1, 2.0, true);
  // Hand recursion with gamma 0.9 and lambda 0.8:
  // d2 = 2 - 0.1 = 1.9, A2 = 1.9
  // d1 = 0 + 0.9 * 0.1 - 0.2 = -0.11, A1 = -0.11 + 0.72 * 1.9 = 1.258
  // d0 = 1 + 0.9 * 0.2 - 0.5 = 0.68, A0 = 0.68 + 0.72 * 1.258 = 1.58576
  const Advantages a = compute_advantages(buffer, 0.9, 0.8);
  CHECK(a.advantages[2] == doctest::Approx(1.9));
  CHECK(a.advantages[1] == doctest::Approx(1.258));
  CHECK(a.advantages[0] == doctest::Approx(1.58576));
  CHECK(a.returns[0] == doctest::Approx(1.58576 + 0.5));

  // A second episode does not bootstrap into the first.
  buffer.add(obs, 0, 0.0, 7.0, 0.0, true);
  const Advantages b = compute_advantages(buffer, 0.9, 0.8);
  CHECK(b.advantages[2] == doctest::Approx(1.9));
  CHECK(b.advantages[3] == doctest::Approx(-7.0));

  buffer.add(obs, 0, 0.0, 0.0, 0.0, false);
  CHECK_THROWS_AS(compute_advantages(buffer, 0.9, 0.8), std::invalid_argument);
  CHECK_THROWS_AS(compute_advantages(RolloutBuffer(1), 0.9, 0.8), std::invalid_argument);
}

TEST_CASE("Adam first step moves each coordinate by the learning rate") {
  AdamOptimizer opt(3, 0.01, 0.9, 0.999, 1e-8);
  Eigen::VectorXd x(3), g(3);
  x << 1.0, 2.0, 3.0;
  g << 0.5, -2.0, 0.0;
  opt.step(x, g);
  CHECK(x[0] == doctest::Approx(0.99));
  CHECK(x[1] == doctest::Approx(2.01));
  CHECK(x[2] == 3.0);
  CHECK(opt.steps() == 1);
}

TEST_CASE("bandit converges") {
  CHECK(testing::bandit_best_probability(200, 1) > 0.95);
}

TEST_CASE("non-finite loss leaves parameters untouched") {
  NetworkParams p = small_network(false);
  const Eigen::VectorXd before = p.values();
  TrainConfig cfg;
  AdamOptimizer opt(p.size(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  RolloutBuffer buffer(6);
  const std::vector<double> obs(6, 0.0);
  buffer.add(obs, 0, std::log(1.0 / 3.0), 0.0, 1.0, false);
  buffer.add(obs, 1, std::log(1.0 / 3.0), 0.0, std::numeric_limits<double>::quiet_NaN(), true);
  CHECK_THROWS_AS(ppo_update(p, opt, buffer, cfg, 1), TrainingError);
  CHECK(p.values() == before);
  CHECK(opt.steps() == 0);
}

TEST_CASE("train config documents") {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.hidden = {32};
  const TrainConfig back = train_config_from_json(to_json(c));
  CHECK(back.learning_rate == 3e-4);
  CHECK(back.hidden == std::vector<int>{32});
  CHECK_THROWS_AS(train_config_from_json({{"lr", 1.0}}), ConfigError);
  c.clip_epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.hidden.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("neural policy acting and recording") {
  auto params = std::make_shared<const NetworkParams>(init_network(NetworkShape{34, 3, {8}, false}, 2));
  NeuralPolicy greedy(params, 16, NeuralPolicy::Mode::kGreedy);
  SleepOnlyAgent idle;
  Trajectory traj;
  greedy.record_into(&traj);
  const auto r = run_episode(GameConfig{}, greedy, idle, 4);
  CHECK(traj.steps() == 100u);
  CHECK(traj.observations.size() == 100u * 34u);
  CHECK(traj.values.size() == 100u);
  // Greedy play is deterministic.
  greedy.record_into(nullptr);
  const auto r2 = run_episode(GameConfig{}, greedy, idle, 9);
  CHECK(r.total_reward == r2.total_reward);
}

TEST_CASE("checkpoint round trip and errors") {
  PolicyCheckpoint ckpt;
  ckpt.params = init_network(NetworkShape{34, 3, {8, 4}, false}, 7);
  ckpt.params.round_to_float();
  ckpt.metadata = {{"note", "test"}};
  const std::string bytes = serialize_checkpoint(ckpt);
  const PolicyCheckpoint back = deserialize_checkpoint(bytes);
  CHECK(back.params.shape() == ckpt.params.shape());
  CHECK(back.params.values() == ckpt.params.values());
  CHECK(back.memory_limit == 16);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK_NOTHROW(back.check_compatible(GameConfig{}));

  auto kind_of = [](std::string_view b) {
    try {
      deserialize_checkpoint(b);
    } catch (const CheckpointError& e) {
      return static_cast<int>(e.kind());
    }
    return -1;
  };
  CHECK(kind_of(std::string_view(bytes).substr(0, bytes.size() - 3)) ==
        static_cast<int>(CheckpointError::Kind::kTruncated));
  CHECK(kind_of(std::string_view(bytes).substr(0, 10)) ==
        static_cast<int>(CheckpointError::Kind::kTruncated));
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK(kind_of(bad) == static_cast<int>(CheckpointError::Kind::kMagic));
  bad = bytes;
  bad[8] = 9;
  CHECK(kind_of(bad) == static_cast<int>(CheckpointError::Kind::kVersion));
  CHECK(kind_of(bytes + "xx") == static_cast<int>(CheckpointError::Kind::kCorrupt));

  GameConfig other;
  other.memory_limit = 8;
  CHECK_THROWS_AS(back.check_compatible(other), CheckpointError);

  const fs::path dir = temp_dir("ckpt");
  save_checkpoint(ckpt, dir / "a.ckpt");
  CHECK(fs::exists(dir / "a.ckpt.json"));
  const PolicyCheckpoint loaded = load_checkpoint(dir / "a.ckpt");
  CHECK(loaded.params.values() == ckpt.params.values());
  CHECK(loaded.metadata.at("note") == "test");
  {
    std::fstream f(dir / "a.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-1, std::ios::end);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("content hash is the git blob hash") {
  CHECK(content_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(content_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("training is reproducible and resumable") {
  const auto opponents = periodic_opponent();
  auto pick = [](Rng&) { return std::size_t{0}; };
  Trainer a(short_game(), tiny_training(), 5);
  Trainer b(short_game(), tiny_training(), 5);
  train_against(a, opponents, pick);
  train_against(b, opponents, pick);
  CHECK(a.epochs_done() == 2);
  CHECK(a.params().values() == b.params().values());

  Trainer c(short_game(), tiny_training(), 5);
  c.run_epoch(opponents, pick);
  const std::string state = c.save_state();
  Trainer d(short_game(), tiny_training(), 5);
  d.load_state(state);
  CHECK(d.epochs_done() == 1);
  d.run_epoch(opponents, pick);
  CHECK(d.params().values() == a.params().values());
  CHECK(d.opponent_stream() == a.opponent_stream());

  Trainer other(short_game(), tiny_training(), 6);
  train_against(other, opponents, pick);
  CHECK(other.params().values() != a.params().values());

  CHECK_THROWS(d.load_state(state.substr(0, state.size() / 2)));
  CHECK_THROWS(other.load_state(state));  // saved under another seed

  const PolicyCheckpoint ck = a.checkpoint({{"k", 1}});
  CHECK(ck.metadata.at("epoch") == 2);
  CHECK(ck.params.values().cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("epoch statistics documents") {
  EpochStats s;
  s.epoch = 3;
  s.mean_reward = 12.5;
  s.mean_ownership = 0.75;
  s.per_opponent.push_back({"x", 4, 10.0, 0.5});
  const EpochStats back = epoch_stats_from_json(to_json(s));
  CHECK(back.epoch == 3);
  CHECK(back.mean_reward == 12.5);
  REQUIRE(back.per_opponent.size() == 1u);
  CHECK(back.per_opponent[0].episodes == 4);
}
