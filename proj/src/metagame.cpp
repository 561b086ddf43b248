#include "poolflip/metagame.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "poolflip/csv.hpp"
#include "poolflip/parallel.hpp"

namespace poolflip {

// ---------------------------------------------------------------------------
// Pool

PolicyPool::PolicyPool(const std::vector<HeuristicSpec>& heuristics) {
  for (const auto& h : heuristics) add_heuristic(h);
}

void PolicyPool::add_heuristic(const HeuristicSpec& spec) {
  validate(spec);
  std::string id = format_heuristic(spec);
  if (find(id)) throw std::invalid_argument("duplicate pool member '" + id + "'");
  members_.push_back({std::move(id), spec, nullptr, {}});
}

void PolicyPool::add_checkpoint(std::string id, std::shared_ptr<const PolicyCheckpoint> checkpoint,
                                std::string path) {
  if (!checkpoint) throw std::invalid_argument("null checkpoint for pool member '" + id + "'");
  if (id.empty()) throw std::invalid_argument("pool member id must not be empty");
  if (find(id)) throw std::invalid_argument("duplicate pool member '" + id + "'");
  members_.push_back({std::move(id), std::nullopt, std::move(checkpoint), std::move(path)});
}

std::vector<std::string> PolicyPool::ids() const {
  std::vector<std::string> out;
  out.reserve(members_.size());
  for (const auto& m : members_) out.push_back(m.id);
  return out;
}

std::optional<std::size_t> PolicyPool::find(const std::string& id) const {
  for (std::size_t i = 0; i < members_.size(); ++i)
    if (members_[i].id == id) return i;
  return std::nullopt;
}

std::unique_ptr<Policy> make_checkpoint_policy(std::shared_ptr<const PolicyCheckpoint> checkpoint,
                                               std::string id) {
  auto params = std::shared_ptr<const NetworkParams>(checkpoint, &checkpoint->params);
  return std::make_unique<NeuralPolicy>(std::move(params), checkpoint->memory_limit,
                                        NeuralPolicy::Mode::kSample, std::move(id));
}

std::unique_ptr<Policy> PolicyPool::make_policy(std::size_t i, std::uint64_t seed) const {
  const PoolMember& m = members_.at(i);
  if (m.heuristic) return make_heuristic(*m.heuristic, seed);
  return make_checkpoint_policy(m.checkpoint, m.id);
}

std::vector<OpponentFactory> PolicyPool::factories() const {
  std::vector<OpponentFactory> out;
  for (std::size_t i = 0; i < members_.size(); ++i)
    out.push_back({members_[i].id, [this, i] { return make_policy(i); }});
  return out;
}

nlohmann::json PolicyPool::manifest() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& m : members_) {
    nlohmann::json e = {{"id", m.id}, {"kind", m.is_heuristic() ? "heuristic" : "checkpoint"}};
    if (!m.is_heuristic()) e["path"] = m.checkpoint_path;
    j.push_back(std::move(e));
  }
  return j;
}

// ---------------------------------------------------------------------------
// Objectives

std::string objective_name(const ResponseObjective& objective) {
  if (std::holds_alternative<RewardObjective>(objective)) return "reward";
  if (const auto* w = std::get_if<WinRateObjective>(&objective))
    return "own" + std::to_string(static_cast<int>(std::lround(w->threshold * 100)));
  return "gap";
}

void validate(const ResponseObjective& objective) {
  if (const auto* w = std::get_if<WinRateObjective>(&objective))
    if (!(w->threshold > 0.0 && w->threshold <= 1.0))
      throw ConfigError("ownership threshold must be in (0, 1]");
}

double win_rate_by_ownership(std::span<const double> ownership, double threshold) {
  if (ownership.empty()) throw std::invalid_argument("win rate of an empty result set");
  const auto wins = std::count_if(ownership.begin(), ownership.end(),
                                  [threshold](double o) { return o > threshold; });
  return static_cast<double>(wins) / static_cast<double>(ownership.size());
}

double performance_gap(double agent_reward, double specialist_reward) {
  return std::max(0.0, specialist_reward - agent_reward);
}

std::vector<double> normalized_gaps(std::span<const double> gaps) {
  if (gaps.empty()) throw std::invalid_argument("normalized_gaps: empty input");
  const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
  std::vector<double> out(gaps.size(), 0.0);
  const double range = *hi - *lo;
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < gaps.size(); ++i) out[i] = (gaps[i] - *lo) / range;
  return out;
}

// ---------------------------------------------------------------------------
// Utilities

namespace {
double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}
}  // namespace

double MemberEvaluation::mean_reward() const { return mean_of(rewards); }
double MemberEvaluation::mean_ownership() const { return mean_of(ownership); }

std::vector<MemberEvaluation> evaluate_against_pool(const GameConfig& game,
                                                    const PolicyFactory& defender,
                                                    const PolicyPool& pool, int episodes,
                                                    std::uint64_t seed, int workers) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (pool.empty()) throw ConfigError("evaluation against an empty pool");
  constexpr int kBlock = 10;
  const int blocks = (episodes + kBlock - 1) / kBlock;
  std::vector<MemberEvaluation> out(pool.size());
  for (std::size_t m = 0; m < pool.size(); ++m) {
    out[m].id = pool.member(m).id;
    out[m].rewards.assign(episodes, 0.0);
    out[m].ownership.assign(episodes, 0.0);
  }
  parallel_for(pool.size() * blocks, workers, [&](std::size_t job) {
    const std::size_t m = job / blocks;
    const int first = static_cast<int>(job % blocks) * kBlock;
    const int last = std::min(episodes, first + kBlock);
    auto d = defender();
    auto a = pool.make_policy(m);
    const std::uint64_t member_key = hash_string(out[m].id);
    for (int e = first; e < last; ++e) {
      EpisodeResult r;
      try {
        r = run_episode(game, *d, *a, derive_seed(seed, {member_key, static_cast<std::uint64_t>(e)}),
                        false);
      } catch (const std::exception& ex) {
        throw std::runtime_error("evaluation against '" + out[m].id + "' failed: " + ex.what());
      }
      out[m].rewards[e] = r.defender_reward();
      out[m].ownership[e] = r.defender_ownership();
    }
  });
  return out;
}

UtilityRow utility_row(const std::vector<MemberEvaluation>& evaluations,
                       const ResponseObjective& objective, int iteration) {
  validate(objective);
  UtilityRow row;
  row.iteration = iteration;
  for (const auto& e : evaluations) {
    row.ids.push_back(e.id);
    row.mean_reward.push_back(e.mean_reward());
    row.reward_std.push_back(sample_std(e.rewards));
    row.mean_ownership.push_back(e.mean_ownership());
    row.episodes = static_cast<int>(e.rewards.size());
  }
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, RewardObjective>) {
          row.values = row.mean_reward;
        } else if constexpr (std::is_same_v<T, WinRateObjective>) {
          for (const auto& e : evaluations)
            row.values.push_back(win_rate_by_ownership(e.ownership, o.threshold));
        } else {
          std::vector<double> gaps;
          for (std::size_t i = 0; i < evaluations.size(); ++i) {
            auto it = o.specialist_rewards.find(row.ids[i]);
            if (it == o.specialist_rewards.end())
              throw ConfigError("no specialist reference reward for '" + row.ids[i] +
                                "'; train specialists first");
            gaps.push_back(performance_gap(row.mean_reward[i], it->second));
          }
          row.values = normalized_gaps(gaps);
        }
      },
      objective);
  return row;
}

UtilityRow evaluate_utilities(const GameConfig& game, const PolicyFactory& defender,
                              const PolicyPool& pool, const ResponseObjective& objective,
                              int episodes, std::uint64_t seed, int workers) {
  return utility_row(evaluate_against_pool(game, defender, pool, episodes, seed, workers), objective);
}

// ---------------------------------------------------------------------------
// Meta-strategy solvers

bool is_distribution(const MetaStrategy& sigma, double tolerance) {
  if (sigma.empty()) return false;
  double total = 0.0;
  for (double p : sigma) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    total += p;
  }
  return std::abs(total - 1.0) <= tolerance;
}

MetaStrategy mss_uniform(std::size_t pool_size) {
  if (pool_size == 0) throw std::invalid_argument("uniform meta-strategy over an empty pool");
  return MetaStrategy(pool_size, 1.0 / static_cast<double>(pool_size));
}

MetaStrategy softmax(std::span<const double> d, double temperature) {
  if (d.empty()) throw std::invalid_argument("softmax of an empty vector");
  if (!(temperature > 0.0)) throw ConfigError("softmax temperature must be > 0");
  const double hi = *std::max_element(d.begin(), d.end());
  MetaStrategy out(d.size());
  double total = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) total += out[i] = std::exp((d[i] - hi) / temperature);
  for (double& p : out) p /= total;
  return out;
}

MetaStrategy mss_softmax(const UtilityRow& row, const ResponseObjective& objective,
                         double temperature) {
  if (std::holds_alternative<RewardObjective>(objective))
    throw ConfigError("the reward objective uses the uniform meta-strategy");
  if (row.values.empty()) throw std::invalid_argument("mss_softmax: empty utility row");
  std::vector<double> difficulty = row.values;
  if (std::holds_alternative<WinRateObjective>(objective))
    for (double& d : difficulty) d = 1.0 - d;
  return softmax(difficulty, temperature);
}

std::size_t sample_index(const MetaStrategy& sigma, Rng& rng) {
  if (sigma.empty()) throw std::invalid_argument("sampling from an empty meta-strategy");
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (sigma[i] <= 0.0) continue;
    last_positive = i;
    cum += sigma[i];
    if (u < cum) return i;
  }
  return last_positive;
}

// ---------------------------------------------------------------------------
// Flip-PSRO

void PsroConfig::validate() const {
  if (iterations < 1) throw ConfigError("psro: iterations must be >= 1");
  if (eval_episodes < 1) throw ConfigError("psro: eval_episodes must be >= 1");
  if (final_eval_episodes < 1) throw ConfigError("psro: final_eval_episodes must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("psro: temperature must be > 0");
  if (workers < 1) throw ConfigError("psro: workers must be >= 1");
  poolflip::validate(objective);
  if (self_play && std::holds_alternative<NormGapObjective>(objective))
    throw ConfigError("psro: the gap objective has no specialist reference for self-play members");
  if (!forced_sigma.empty() && static_cast<int>(forced_sigma.size()) != iterations)
    throw ConfigError("psro: forced_sigma needs one entry per iteration");
  train.validate();
  game.validate();
}

namespace {

constexpr std::uint64_t kEvalStream = 0x6576616c;    // "eval"
constexpr std::uint64_t kFinalStream = 0x66696e6c;   // "finl"

std::string self_play_id(int iteration) { return "psro_it" + std::to_string(iteration); }

nlohmann::json row_to_json(const UtilityRow& r) {
  return {{"iteration", r.iteration},   {"ids", r.ids},
          {"values", r.values},         {"mean_reward", r.mean_reward},
          {"reward_std", r.reward_std}, {"mean_ownership", r.mean_ownership},
          {"episodes", r.episodes}};
}

UtilityRow row_from_json(const nlohmann::json& j) {
  UtilityRow r;
  r.iteration = j.at("iteration").get<int>();
  r.ids = j.at("ids").get<std::vector<std::string>>();
  r.values = j.at("values").get<std::vector<double>>();
  r.mean_reward = j.at("mean_reward").get<std::vector<double>>();
  r.reward_std = j.at("reward_std").get<std::vector<double>>();
  r.mean_ownership = j.at("mean_ownership").get<std::vector<double>>();
  r.episodes = j.at("episodes").get<int>();
  return r;
}

}  // namespace

PsroRunner::PsroRunner(PsroConfig config, PolicyPool pool)
    : config_(std::move(config)),
      pool_(std::move(pool)),
      base_pool_size_(pool_.size()),
      trainer_(config_.game, config_.train, config_.seed) {
  config_.validate();
  if (pool_.empty()) throw ConfigError("psro: the initial pool is empty");
  sigma_ = mss_uniform(pool_.size());
  result_.pool = pool_;
}

void PsroRunner::step() {
  if (done()) throw StateError("psro: all iterations already ran");
  const int t = iteration_;
  const MetaStrategy sigma = config_.forced_sigma.empty() ? sigma_ : config_.forced_sigma[t];
  if (sigma.size() != pool_.size() || !is_distribution(sigma, 1e-9))
    throw ConfigError("psro: iteration " + std::to_string(t) +
                      " meta-strategy is not a distribution over the pool");
  result_.sigmas.push_back(sigma);
  result_.sigma_ids.push_back(pool_.ids());

  const auto factories = pool_.factories();
  try {
    result_.curve.push_back(trainer_.run_epoch(
        factories, [&sigma](Rng& rng) { return sample_index(sigma, rng); }));
  } catch (const std::exception& e) {
    throw TrainingError("psro iteration " + std::to_string(t) + ": " + e.what());
  }

  auto snapshot = std::make_shared<const PolicyCheckpoint>(trainer_.checkpoint(
      {{"objective", objective_name(config_.objective)}, {"iteration", t}}));
  if (config_.self_play) pool_.add_checkpoint(self_play_id(t), snapshot);

  const PolicyFactory defender = [snapshot] { return make_checkpoint_policy(snapshot, "learner"); };
  UtilityRow row = evaluate_utilities(config_.game, defender, pool_, config_.objective,
                                      config_.eval_episodes,
                                      derive_seed(config_.seed, {kEvalStream, static_cast<std::uint64_t>(t)}),
                                      config_.workers);
  row.iteration = t;
  if (std::holds_alternative<RewardObjective>(config_.objective))
    sigma_ = mss_uniform(pool_.size());
  else
    sigma_ = mss_softmax(row, config_.objective, config_.temperature);
  result_.utilities.push_back(std::move(row));
  ++iteration_;
}

PsroResult PsroRunner::finish(const std::function<void(const PsroRunner&)>& after_iteration) {
  while (!done()) {
    step();
    if (after_iteration) after_iteration(*this);
  }
  nlohmann::json pool_ids = nlohmann::json::array();
  for (std::size_t i = 0; i < base_pool_size_; ++i) pool_ids.push_back(pool_.member(i).id);
  result_.final_policy = trainer_.checkpoint({{"trainer", "psro"},
                                              {"objective", objective_name(config_.objective)},
                                              {"temperature", config_.temperature},
                                              {"self_play", config_.self_play},
                                              {"iterations", config_.iterations},
                                              {"pool", pool_ids},
                                              {"final_sigma", sigma_}});
  PolicyPool base;
  for (std::size_t i = 0; i < base_pool_size_; ++i) {
    const auto& m = pool_.member(i);
    if (m.heuristic)
      base.add_heuristic(*m.heuristic);
    else
      base.add_checkpoint(m.id, m.checkpoint, m.checkpoint_path);
  }
  auto final_ckpt = std::make_shared<const PolicyCheckpoint>(result_.final_policy);
  result_.final_evaluation = evaluate_against_pool(
      config_.game, [final_ckpt] { return make_checkpoint_policy(final_ckpt, "learner"); }, base,
      config_.final_eval_episodes, derive_seed(config_.seed, {kFinalStream}), config_.workers);
  result_.opponent_stream = trainer_.opponent_stream();
  result_.pool = pool_;
  return result_;
}

void PsroRunner::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "trainer.state", std::ios::binary | std::ios::trunc);
    const std::string bytes = trainer_.save_state();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write " + (dir / "trainer.state").string());
  }
  nlohmann::json self_play = nlohmann::json::array();
  for (std::size_t i = base_pool_size_; i < pool_.size(); ++i) {
    const auto& m = pool_.member(i);
    const auto file = m.id + ".ckpt";
    if (!std::filesystem::exists(dir / file)) save_checkpoint(*m.checkpoint, dir / file);
    self_play.push_back({{"id", m.id}, {"file", file}});
  }
  nlohmann::json j = {{"iteration", iteration_},
                      {"seed", config_.seed},
                      {"objective", objective_name(config_.objective)},
                      {"sigma", sigma_},
                      {"sigmas", result_.sigmas},
                      {"sigma_ids", result_.sigma_ids},
                      {"self_play_members", self_play}};
  j["utilities"] = nlohmann::json::array();
  for (const auto& r : result_.utilities) j["utilities"].push_back(row_to_json(r));
  j["curve"] = nlohmann::json::array();
  for (const auto& c : result_.curve) j["curve"].push_back(to_json(c));
  std::ofstream out(dir / "psro_state.json", std::ios::trunc);
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("cannot write " + (dir / "psro_state.json").string());
}

void PsroRunner::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "psro_state.json");
  if (!in) throw std::runtime_error("no PSRO state in " + dir.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("seed").get<std::uint64_t>() != config_.seed ||
      j.at("objective").get<std::string>() != objective_name(config_.objective))
    throw ConfigError("psro: saved state in " + dir.string() + " belongs to another configuration");
  std::ifstream st(dir / "trainer.state", std::ios::binary);
  if (!st) throw std::runtime_error("no trainer state in " + dir.string());
  std::ostringstream bytes;
  bytes << st.rdbuf();
  trainer_.load_state(bytes.str());

  PolicyPool pool;
  for (std::size_t i = 0; i < base_pool_size_; ++i) {
    const auto& m = pool_.member(i);
    if (m.heuristic)
      pool.add_heuristic(*m.heuristic);
    else
      pool.add_checkpoint(m.id, m.checkpoint, m.checkpoint_path);
  }
  for (const auto& m : j.at("self_play_members")) {
    const auto file = dir / m.at("file").get<std::string>();
    pool.add_checkpoint(m.at("id").get<std::string>(),
                        std::make_shared<const PolicyCheckpoint>(load_checkpoint(file)),
                        file.string());
  }
  pool_ = std::move(pool);
  iteration_ = j.at("iteration").get<int>();
  sigma_ = j.at("sigma").get<MetaStrategy>();
  result_ = PsroResult{};
  result_.sigmas = j.at("sigmas").get<std::vector<MetaStrategy>>();
  result_.sigma_ids = j.at("sigma_ids").get<std::vector<std::vector<std::string>>>();
  for (const auto& r : j.at("utilities")) result_.utilities.push_back(row_from_json(r));
  for (const auto& c : j.at("curve")) result_.curve.push_back(epoch_stats_from_json(c));
  result_.pool = pool_;
}

PsroResult flip_psro(const PsroConfig& config, PolicyPool pool) {
  PsroRunner runner(config, std::move(pool));
  return runner.finish();
}

// ---------------------------------------------------------------------------
// Baselines

IbrResult ibr_train(const std::vector<HeuristicSpec>& order, int epochs_per_opponent,
                    const GameConfig& game, const TrainConfig& train, std::uint64_t seed) {
  if (order.empty()) throw ConfigError("ibr: empty opponent order");
  if (epochs_per_opponent < 1) throw ConfigError("ibr: epochs per opponent must be >= 1");
  const PolicyPool pool(order);
  const auto factories = pool.factories();
  Trainer trainer(game, train, seed);
  IbrResult out;
  for (std::size_t k = 0; k < order.size(); ++k)
    for (int e = 0; e < epochs_per_opponent; ++e)
      out.curve.push_back(trainer.run_epoch(factories, [k](Rng&) { return k; }));
  nlohmann::json ids = pool.ids();
  out.final_policy = trainer.checkpoint(
      {{"trainer", "ibr"}, {"order", ids}, {"epochs_per_opponent", epochs_per_opponent}});
  out.opponent_stream = trainer.opponent_stream();
  return out;
}

std::vector<MetaStrategy> ibr_schedule(std::size_t pool_size, int epochs_per_opponent) {
  std::vector<MetaStrategy> out;
  for (std::size_t k = 0; k < pool_size; ++k) {
    MetaStrategy one_hot(pool_size, 0.0);
    one_hot[k] = 1.0;
    for (int e = 0; e < epochs_per_opponent; ++e) out.push_back(one_hot);
  }
  return out;
}

std::vector<SpecialistResult> train_specialists(const PolicyPool& pool, const GameConfig& game,
                                                const TrainConfig& train, std::uint64_t seed,
                                                int eval_episodes, int workers) {
  std::vector<SpecialistResult> out(pool.size());
  parallel_for(pool.size(), workers, [&](std::size_t i) {
    const PoolMember& m = pool.member(i);
    const std::uint64_t run_seed = derive_seed(seed, {hash_string(m.id)});
    Trainer trainer(game, train, run_seed);
    const std::vector<OpponentFactory> single{{m.id, [&pool, i] { return pool.make_policy(i); }}};
    SpecialistResult& r = out[i];
    r.id = m.id;
    r.curve = train_against(trainer, single, [](Rng&) { return std::size_t{0}; });
    r.policy = trainer.checkpoint({{"trainer", "specialist"}, {"opponent", m.id}});

    PolicyPool just_one;
    if (m.heuristic)
      just_one.add_heuristic(*m.heuristic);
    else
      just_one.add_checkpoint(m.id, m.checkpoint, m.checkpoint_path);
    auto ckpt = std::make_shared<const PolicyCheckpoint>(r.policy);
    const auto eval = evaluate_against_pool(
        game, [ckpt] { return make_checkpoint_policy(ckpt, "specialist"); }, just_one,
        eval_episodes, derive_seed(run_seed, {kFinalStream}), 1);
    r.reward = eval[0].mean_reward();
    r.ownership = eval[0].mean_ownership();
    r.policy.metadata["reward"] = r.reward;
  });
  return out;
}

NormGapObjective gap_objective(const std::vector<SpecialistResult>& specialists) {
  NormGapObjective o;
  for (const auto& s : specialists) o.specialist_rewards[s.id] = s.reward;
  return o;
}

// ---------------------------------------------------------------------------
// Exports

void write_utilities_csv(std::ostream& os, const std::vector<UtilityRow>& rows) {
  csv::write_row(os, {"iteration", "member", "value", "mean_reward", "reward_std", "mean_ownership",
                      "episodes"});
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.ids.size(); ++i)
      csv::write_row(os, {csv::format_number(r.iteration), r.ids[i], csv::format_number(r.values[i]),
                          csv::format_number(r.mean_reward[i]), csv::format_number(r.reward_std[i]),
                          csv::format_number(r.mean_ownership[i]), csv::format_number(r.episodes)});
}

void write_sigma_csv(std::ostream& os, const std::vector<MetaStrategy>& sigmas,
                     const std::vector<std::vector<std::string>>& ids) {
  if (sigmas.size() != ids.size()) throw std::invalid_argument("sigma history and ids differ in length");
  csv::write_row(os, {"iteration", "member", "probability"});
  for (std::size_t t = 0; t < sigmas.size(); ++t)
    for (std::size_t i = 0; i < sigmas[t].size(); ++i)
      csv::write_row(os, {csv::format_number(static_cast<long long>(t)), ids[t].at(i),
                          csv::format_number(sigmas[t][i])});
}

void write_curve_csv(std::ostream& os, const std::vector<EpochStats>& curve) {
  csv::write_row(os, {"epoch", "opponent", "episodes", "mean_reward", "mean_ownership"});
  for (const auto& s : curve) {
    int total = 0;
    for (const auto& o : s.per_opponent) {
      total += o.episodes;
      csv::write_row(os, {csv::format_number(s.epoch), o.id, csv::format_number(o.episodes),
                          csv::format_number(o.mean_reward), csv::format_number(o.mean_ownership)});
    }
    csv::write_row(os, {csv::format_number(s.epoch), "all", csv::format_number(total),
                        csv::format_number(s.mean_reward), csv::format_number(s.mean_ownership)});
  }
}

}  // namespace poolflip
