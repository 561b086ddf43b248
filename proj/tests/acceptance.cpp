// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "poolflip/cli.hpp"
#include "poolflip/harness.hpp"
#include "poolflip/metagame.hpp"
#include "poolflip/parallel.hpp"
#include "support.hpp"

using namespace poolflip;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string sci(double v) {
  std::ostringstream os;
  os.setf(std::ios::scientific);
  os.precision(1);
  os << v;
  return os.str();
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

int failures = 0;
std::vector<int> selected;  // empty: every criterion

void report(int number, const std::string& title, const std::function<Verdict()>& body) {
  if (!selected.empty() && std::find(selected.begin(), selected.end(), number) == selected.end()) return;
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::cout << "criterion " << number << " " << (v.pass ? "PASS" : "FAIL") << " | " << title << " | "
            << v.detail << " | " << fixed(secs, 1) << "s" << std::endl;
}

class Constant final : public Policy {
 public:
  explicit Constant(Action a) : a_(a) {}
  void reset(std::uint64_t) override {}
  Action act(const PlayerView&) override { return a_; }
  std::string id() const override { return "constant"; }

 private:
  Action a_;
};

std::string pattern(const HeuristicSpec& spec) {
  GameConfig g;
  g.horizon = 10;
  auto d = make_heuristic(spec);
  SleepOnlyAgent a;
  std::string s;
  for (const auto& step : run_episode(g, *d, a, 0).trace) {
    if (!s.empty()) s += ',';
    s += action_symbol(step.actions[0]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Shared training runs for criteria 8 to 10.

struct HeadlineRuns {
  AgentRow o50, o70, ibr, awake;
  AgentRow o50_transfer, ibr_transfer;
};

const ExperimentPreset& paper() { return find_preset("paper-default"); }

AgentRow row_from(const std::string& name, const std::vector<MemberEvaluation>& ev) {
  AgentRow r;
  r.agent = name;
  for (const auto& e : ev) {
    r.opponents.push_back(e.id);
    r.reward.push_back(e.mean_reward());
    r.ownership.push_back(e.mean_ownership());
    r.episodes = static_cast<int>(e.rewards.size());
  }
  return r;
}

std::string describe(const AgentRow& r) {
  return r.agent + " reward " + fixed(r.average_reward()) + " ownership " +
         fixed(100.0 * r.average_ownership()) + "%";
}

HeadlineRuns& headline() {
  static HeadlineRuns runs = [] {
    const ExperimentPreset& p = paper();
    const int workers = default_workers();
    HeadlineRuns h;
    auto psro = [&](const std::string& name, double threshold) {
      PsroConfig c;
      c.game = p.game;
      c.seed = p.seed;
      c.temperature = p.temperature;
      c.objective = WinRateObjective{threshold};
      c.workers = workers;
      const PsroResult r = flip_psro(c, PolicyPool(p.pool));
      std::cout << "  " << name << " trained: final sigma";
      for (double s : r.sigmas.back()) std::cout << " " << fixed(s);
      std::cout << std::endl;
      return std::pair{row_from(name, r.final_evaluation), r.final_policy};
    };
    auto [o50, o50_policy] = psro("MSS-O50%", 0.5);
    h.o50 = o50;
    h.o70 = psro("MSS-O70%", 0.7).first;

    const TrainConfig train;
    const int per = train.total_epochs / static_cast<int>(p.pool.size());
    const auto order = parse_heuristic_list(
        "awake:lambda=0.05; burst:phase=8,burst=3; periodic:phase=4; pc:phase=4; pac:phase=4");
    const IbrResult ibr = ibr_train(order, per, p.game, train, p.seed);
    const std::uint64_t eval_seed = derive_seed(p.seed, {hash_string("final-eval")});
    h.ibr = evaluate_checkpoint("IBR", ibr.final_policy, p.game, p.pool, 100, eval_seed, workers);
    h.awake = evaluate_heuristic(parse_heuristic("awake:lambda=0.05"), p.game, p.pool, 100, eval_seed, workers);
    h.o50_transfer = transfer_eval("MSS-O50%", o50_policy, p.game, p.transfer, 100, eval_seed, workers);
    h.ibr_transfer = transfer_eval("IBR", ibr.final_policy, p.game, p.transfer, 100, eval_seed, workers);
    return h;
  }();
  return runs;
}

// ---------------------------------------------------------------------------

std::vector<std::string> csv_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "poolflip");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cout << "  " << err.str();
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  report(1, "closed-form engine checks", [] {
    Verdict v;
    const GameConfig g = paper().game;
    SleepOnlyAgent s1, s2;
    auto r = run_episode(g, s1, s2, 0);
    v.require(r.defender_reward() == 100.0 && r.defender_ownership() == 1.0, "Sleep/Sleep = 100, ownership 1");
    Constant flipper(Action::flip(0));
    r = run_episode(g, flipper, s2, 0);
    v.require(r.defender_reward() == -100.0, "flip-every-step/Sleep = -100");
    auto periodic = make_heuristic(PeriodicSpec{4, 0});
    r = run_episode(g, *periodic, s2, 0);
    v.require(r.defender_reward() == 50.0, "Periodic(4, delay 0)/Sleep = 50");
    v.note("100, -100, 50 exact");
    return v;
  });

  report(2, "golden heuristic patterns", [] {
    Verdict v;
    const std::string p = pattern(PeriodicSpec{3, 2});
    const std::string b = pattern(BurstSpec{3, 2, 3});
    v.require(p == "S,S,F,S,S,F,S,S,F,S", "Periodic(3, delay 2) = " + p);
    v.require(b == "S,S,F,F,F,S,S,F,F,F", "Burst(3, 2, 3) = " + b);
    v.note("Periodic [" + p + "], Burst [" + b + "]");
    return v;
  });

  report(3, "ownership update property suite", [] {
    Verdict v;
    const std::vector<Action> actions{Action::sleep(), Action::flip(0), Action::check(0)};
    int cases = 0;
    for (Player owner : {Player::kDefender, Player::kAttacker}) {
      for (Action ad : actions) {
        for (Action aa : actions) {
          GameConfig g;
          g.initial_owner = owner;
          Game game(g, static_cast<std::uint64_t>(cases));
          const StepOutcome o = game.resolve_step(ad, aa);
          const Action non_owner = owner == Player::kDefender ? aa : ad;
          const Action holder = owner == Player::kDefender ? ad : aa;
          const bool change = non_owner.is_flip() && !holder.is_flip();
          v.require((o.owners[0] != owner) == change,
                    "owner rule for " + to_string(ad) + "/" + to_string(aa));
          ++cases;
        }
      }
    }
    int episodes = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      auto d = make_heuristic(parse_heuristic("awake:lambda=0.05"));
      auto a = make_heuristic(parse_heuristic("random:p=0.5"));
      EpisodeSeeds seeds = EpisodeSeeds::derive(s);
      const auto r1 = run_episode(GameConfig{}, *d, *a, seeds);
      seeds.engine = ~seeds.engine;
      const auto r2 = run_episode(GameConfig{}, *d, *a, seeds);
      v.require(r1.total_reward == r2.total_reward, "engine generator independence");
      ++episodes;
    }
    v.note(std::to_string(cases) + " action/owner cases, " + std::to_string(episodes) +
           " episode pairs with different engine seeds");
    return v;
  });

  report(4, "awakening flip hazard", [] {
    Verdict v;
    for (double lambda : {0.05, 0.5}) {
      const auto h = testing::awakening_hazard(lambda, 100000, 64, 0xa11ce);
      double worst = 0.0;
      int buckets = 0;
      for (int t = 0; t < 64; ++t) {
        if (h.trials[t] < 2500) continue;
        worst = std::max(worst, std::abs(h.rate(t) - (1.0 - std::exp(-lambda * t))));
        ++buckets;
      }
      v.require(worst <= 0.02, "lambda " + fixed(lambda) + " max deviation " + fixed(worst, 4));
      v.require(buckets >= 2, "lambda " + fixed(lambda) + " has too few populated buckets");
      v.note("lambda " + fixed(lambda) + ": " + std::to_string(buckets) + " buckets, max |dev| " + fixed(worst, 4));
    }
    return v;
  });

  report(5, "heuristic table reproduction", [] {
    Verdict v;
    const auto defenders = ablation_defenders();
    const auto attackers = ablation_attackers();
    const TournamentTable t = tournament(paper().game, defenders, attackers, 1000, paper().seed, default_workers());
    auto cell = [&](const char* d, const char* a) {
      return t.find(format_heuristic(parse_heuristic(d)), format_heuristic(parse_heuristic(a))).mean;
    };
    struct Target {
      const char* d;
      const char* a;
      double mean;
      double std;
    };
    const Target targets[] = {{"awake:lambda=0.05", "awake:lambda=0.05", 23.1, 8.9},
                              {"reta:phase=2", "reta:phase=2", -100.0, 0.3},
                              {"awake:lambda=0.05", "pac:phase=8", 23.8, 5.8}};
    for (const auto& target : targets) {
      const double ours = cell(target.d, target.a);
      const double tol = std::max(2.0 * target.std / std::sqrt(100.0), 3.0);
      const std::string name = display_name(parse_heuristic(target.d)) + "/" + display_name(parse_heuristic(target.a));
      v.require(std::abs(ours - target.mean) <= tol, name + " " + fixed(ours, 1) + " vs " + fixed(target.mean, 1));
      v.note(name + " " + fixed(ours, 1) + " (paper " + fixed(target.mean, 1) + ", tol " + fixed(tol, 1) + ")");
    }
    // Retaliating-dependent cells: sign and ordering only.
    bool signs = true, order = true, row = true;
    for (const auto& d : defenders) {
      const std::string id = format_heuristic(d);
      const double r2 = t.find(id, "reta:phase=2").mean;
      const double r8 = t.find(id, "reta:phase=8").mean;
      signs = signs && r2 < 0.0;
      order = order && r2 < r8;
    }
    for (const auto& a : attackers) row = row && t.find("reta:phase=2", format_heuristic(a)).mean < 0.0;
    v.require(signs, "every defender loses against Reta(2)");
    v.require(order, "Reta(2) attacker is harsher than Reta(8) for every defender");
    v.require(row, "Reta(2) defender is negative against every attacker");
    v.note("Reta directional checks " + std::string(signs && order && row ? "hold" : "violated"));
    return v;
  });

  report(6, "PPO gradient oracle and bandit", [] {
    Verdict v;
    TrainConfig cfg;
    for (bool shared : {false, true}) {
      const NetworkParams p = init_network(NetworkShape{12, 3, {32, 32}, shared}, 3);
      const auto batch = testing::random_batch(p, 128, 11);
      const auto g = testing::check_gradient(p, batch, cfg, 150);
      const std::string tag = shared ? "shared trunk" : "separate towers";
      v.require(g.coordinates >= 100 && g.max_relative_error <= 1e-4,
                tag + " " + std::to_string(g.coordinates) + " coordinates, rel err " + sci(g.max_relative_error));
      v.note(tag + ": " + std::to_string(g.coordinates) + " coords, max rel err " + sci(g.max_relative_error));
    }
    const double best = testing::bandit_best_probability(200, 1);
    v.require(best > 0.95, "bandit p(best) " + fixed(best, 3));
    v.note("bandit p(best) after 200 updates " + fixed(best, 3));
    return v;
  });

  report(7, "specialist training (50 epochs x 100 episodes)", [] {
    Verdict v;
    const ExperimentPreset& p = paper();
    TrainConfig train;
    train.total_epochs = 50;
    const PolicyPool pool(parse_heuristic_list("periodic:phase=4; pc:phase=4"));
    const auto specialists = train_specialists(pool, p.game, train, p.seed, 100, default_workers());
    const double thresholds[] = {35.0, 45.0};
    for (std::size_t i = 0; i < specialists.size(); ++i) {
      const auto& s = specialists[i];
      const std::string name = display_name(parse_heuristic(s.id));
      v.require(s.reward >= thresholds[i], name + " " + fixed(s.reward, 1) + " < " + fixed(thresholds[i], 0));
      v.note("vs " + name + " " + fixed(s.reward, 1) + " (need >= " + fixed(thresholds[i], 0) + ")");
    }
    return v;
  });

  report(8, "Flip-PSRO headline (200 iterations)", [] {
    Verdict v;
    const HeadlineRuns& h = headline();
    const double o50 = h.o50.average_reward();
    v.require(o50 >= 25.0, "MSS-O50% average " + fixed(o50));
    v.require(o50 > h.awake.average_reward(), "not above the Awake(0.05) baseline");
    v.require(o50 - h.ibr.average_reward() >= 0.0, "not above IBR");
    v.note(describe(h.o50) + "; " + describe(h.awake) + "; " + describe(h.ibr));
    return v;
  });

  report(9, "ownership objective", [] {
    Verdict v;
    const HeadlineRuns& h = headline();
    const double o70 = h.o70.average_ownership();
    const double o50 = h.o50.average_ownership();
    v.require(o70 >= 0.70, "MSS-O70% ownership " + fixed(100 * o70) + "% < 70%");
    v.require(o70 >= o50, "MSS-O70% ownership below MSS-O50% (" + fixed(100 * o70) + "% vs " + fixed(100 * o50) + "%)");
    v.note(describe(h.o70) + "; " + describe(h.o50));
    return v;
  });

  report(10, "transfer to unseen opponents", [] {
    Verdict v;
    const HeadlineRuns& h = headline();
    const double o50 = h.o50_transfer.average_reward();
    const double ibr = h.ibr_transfer.average_reward();
    v.require(o50 >= 1.5 * ibr, "MSS-O50% " + fixed(o50) + " vs 1.5 x IBR " + fixed(1.5 * ibr));
    const auto& opp = h.o50_transfer.opponents;
    auto reward_vs = [&](const char* spec) {
      const std::string id = format_heuristic(parse_heuristic(spec));
      for (std::size_t i = 0; i < opp.size(); ++i)
        if (opp[i] == id) return h.o50_transfer.reward[i];
      throw std::runtime_error(std::string("transfer roster lacks ") + spec);
    };
    const double p8 = reward_vs("periodic:phase=8"), p6 = reward_vs("periodic:phase=6");
    v.require(p8 > p6, "reward vs P(8) " + fixed(p8) + " not above P(6) " + fixed(p6));
    v.note("MSS-O50% " + fixed(o50) + " vs IBR " + fixed(ibr) + " (ratio " + fixed(ibr != 0 ? o50 / ibr : 0.0) +
           "); P(8) " + fixed(p8, 1) + " vs P(6) " + fixed(p6, 1));
    return v;
  });

  report(11, "metagame unit suite", [] {
    Verdict v;
    Rng rng(99);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + rng.below(7);
      std::vector<double> d(n);
      for (auto& x : d) x = 10.0 * (rng.uniform() - 0.5);
      const double tau = 0.1 + rng.uniform();
      const MetaStrategy s = softmax(d, tau);
      v.require(is_distribution(s), "softmax leaves the simplex");
      std::vector<double> shifted = d;
      for (auto& x : shifted) x += 3.7;
      const MetaStrategy s2 = softmax(shifted, tau);
      std::vector<double> rev(d.rbegin(), d.rend());
      const MetaStrategy sr = softmax(rev, tau);
      for (std::size_t i = 0; i < n; ++i) {
        v.require(std::abs(s2[i] - s[i]) < 1e-12, "shift invariance");
        v.require(std::abs(sr[n - 1 - i] - s[i]) < 1e-12, "permutation equivariance");
      }
    }
    const auto g = normalized_gaps(std::vector<double>{4.0, 1.0, 9.0});
    v.require(g[1] == 0.0 && g[2] == 1.0, "NormGap min to 0, max to 1");
    v.require(normalized_gaps(std::vector<double>{2.0, 2.0}) == std::vector<double>{0.0, 0.0}, "NormGap constant to zeros");
    std::vector<double> own(50);
    for (auto& x : own) x = rng.uniform();
    double prev = 1.0;
    for (int k = 1; k <= 20; ++k) {
      const double w = win_rate_by_ownership(own, k / 20.0);
      v.require(w <= prev, "win rate monotone in threshold");
      prev = w;
    }
    TrainConfig tiny;
    tiny.episodes_per_epoch = 4;
    tiny.episodes_per_update = 2;
    tiny.minibatch_size = 20;
    tiny.epochs_per_update = 1;
    tiny.hidden = {8};
    GameConfig game;
    game.horizon = 10;
    const auto order = parse_heuristic_list("awake:lambda=0.05; burst:phase=8,burst=3; periodic:phase=4");
    const IbrResult ibr = ibr_train(order, 1, game, tiny, 21);
    PsroConfig c;
    c.iterations = 3;
    c.eval_episodes = 2;
    c.final_eval_episodes = 2;
    c.seed = 21;
    c.train = tiny;
    c.game = game;
    c.forced_sigma = ibr_schedule(3, 1);
    const PsroResult psro = flip_psro(c, PolicyPool(order));
    v.require(psro.opponent_stream == ibr.opponent_stream, "IBR and one-hot PSRO opponent streams differ");
    v.note("softmax properties over 500 random vectors, NormGap, win-rate monotonicity, IBR stream of " +
           std::to_string(ibr.opponent_stream.size()) + " episodes matches");
    return v;
  });

  report(12, "manifest re-runs reproduce CSVs byte-for-byte", [] {
    Verdict v;
    const fs::path root = fs::temp_directory_path() / "poolflip_acceptance_repro";
    fs::remove_all(root);
    const std::string tiny =
        R"({"episodes_per_epoch": 10, "episodes_per_update": 5, "minibatch_size": 100, "hidden": [16]})";
    const std::vector<std::vector<std::string>> runs{
        {"tournament", "--episodes", "50"},
        {"sweep", "--episodes", "20"},
        {"train", "--mode", "psro", "--mss", "own", "--iterations", "3", "--eval-episodes", "5",
         "--final-eval-episodes", "10", "--train-config", tiny},
        {"train", "--mode", "ibr", "--epochs-per-opponent", "1", "--train-config", tiny, "--episodes", "10"},
    };
    int compared = 0;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const fs::path a = root / ("run" + std::to_string(i) + "_a");
      const fs::path b = root / ("run" + std::to_string(i) + "_b");
      auto first = runs[i];
      first.insert(first.end(), {"--out", a.string(), "--workers", "1", "--seed", "11"});
      v.require(invoke(first) == 0, runs[i][0] + " run failed");
      v.require(invoke({runs[i][0], "--config", (a / "manifest.json").string(), "--out", b.string(),
                        "--workers", "4"}) == 0,
                runs[i][0] + " replay failed");
      const auto files = csv_files(a);
      v.require(!files.empty() && files == csv_files(b), runs[i][0] + " CSV sets differ");
      for (const auto& f : files) {
        v.require(slurp(a / f) == slurp(b / f), runs[i][0] + " " + f + " differs");
        ++compared;
      }
      if (fs::exists(a / "ibr.ckpt")) v.require(slurp(a / "ibr.ckpt") == slurp(b / "ibr.ckpt"), "ibr checkpoint differs");
    }
    v.note(std::to_string(compared) + " CSV files identical across workers 1 and 4");
    return v;
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
