#include "poolflip/cli.hpp"

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "poolflip/csv.hpp"
#include "poolflip/harness.hpp"
#include "poolflip/heuristics.hpp"
#include "poolflip/metagame.hpp"
#include "poolflip/parallel.hpp"

namespace poolflip::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config documents

namespace {

std::vector<std::string> canonical(const std::vector<HeuristicSpec>& specs) {
  std::vector<std::string> out;
  for (const auto& s : specs) out.push_back(format_heuristic(s));
  return out;
}

std::vector<std::string> canonical_list(const std::string& text) {
  return canonical(parse_heuristic_list(text));
}

std::vector<HeuristicSpec> parse_all(const std::vector<std::string>& ids) {
  std::vector<HeuristicSpec> out;
  for (const auto& s : ids) out.push_back(parse_heuristic(s));
  return out;
}

// A spec list may be given as one string ("a;b") or an array of strings.
std::vector<std::string> spec_list_from_json(const json& v) {
  if (v.is_string()) return canonical_list(v.get<std::string>());
  std::vector<std::string> out;
  for (const auto& item : v) out.push_back(format_heuristic(parse_heuristic(item.get<std::string>())));
  return out;
}

template <typename F>
void for_keys(const json& j, const std::string& section, F&& f) {
  if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (!f(key, v)) throw ConfigError(section + ": unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError(section + ": bad value for '" + key + "': " + e.what());
    }
  }
}

}  // namespace

RunConfig preset_config(const std::string& name) {
  const ExperimentPreset& p = find_preset(name);
  RunConfig c;
  c.preset = p.name;
  c.engine = p.game;
  c.pool = canonical(p.pool);
  c.transfer = canonical(p.transfer);
  c.defenders = canonical(p.roster);
  c.attackers = canonical(p.roster);
  c.episodes = p.episodes;
  c.seed = p.seed;
  c.psro.temperature = p.temperature;
  c.workers = default_workers();
  return c;
}

json to_json(const RunConfig& c) {
  return {{"preset", c.preset},
          {"seed", c.seed},
          {"workers", c.workers},
          {"output_dir", c.output_dir},
          {"episodes", c.episodes},
          {"engine", poolflip::to_json(c.engine)},
          {"agents",
           {{"defenders", c.defenders},
            {"attackers", c.attackers},
            {"pool", c.pool},
            {"transfer", c.transfer},
            {"opponent", c.opponent},
            {"order", c.order},
            {"checkpoints", c.checkpoints},
            {"baselines", c.baselines},
            {"roster", c.roster}}},
          {"training",
           {{"mode", c.mode},
            {"ibr_epochs_per_opponent", c.ibr_epochs_per_opponent},
            {"checkpoint_every", c.checkpoint_every},
            {"run_name", c.run_name}}},
          {"train", poolflip::to_json(c.train)},
          {"psro",
           {{"iterations", c.psro.iterations},
            {"eval_episodes", c.psro.eval_episodes},
            {"final_eval_episodes", c.psro.final_eval_episodes},
            {"mss", c.psro.mss},
            {"own_threshold", c.psro.own_threshold},
            {"temperature", c.psro.temperature},
            {"self_play", c.psro.self_play},
            {"specialists", c.psro.specialists}}},
          {"sweep",
           {{"family", c.sweep.family},
            {"parameter", c.sweep.parameter},
            {"values", c.sweep.values},
            {"fixed", c.sweep.fixed}}}};
}

RunConfig apply_json(const json& doc, RunConfig c) {
  const json& j = doc.is_object() && doc.contains("command") && doc.contains("config")
                      ? doc.at("config")
                      : doc;
  for_keys(j, "config", [&](const std::string& key, const json& v) {
    if (key == "preset") c.preset = v.get<std::string>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "workers") c.workers = v.get<int>();
    else if (key == "output_dir") c.output_dir = v.get<std::string>();
    else if (key == "episodes") c.episodes = v.get<int>();
    else if (key == "engine") c.engine = game_config_from_json(v, c.engine);
    else if (key == "train") c.train = train_config_from_json(v, c.train);
    else if (key == "agents") {
      for_keys(v, "agents", [&](const std::string& k, const json& a) {
        if (k == "defenders") c.defenders = spec_list_from_json(a);
        else if (k == "attackers") c.attackers = spec_list_from_json(a);
        else if (k == "pool") c.pool = spec_list_from_json(a);
        else if (k == "transfer") c.transfer = spec_list_from_json(a);
        else if (k == "order") c.order = spec_list_from_json(a);
        else if (k == "baselines") c.baselines = spec_list_from_json(a);
        else if (k == "opponent") c.opponent = a.get<std::string>();
        else if (k == "checkpoints") c.checkpoints = a.get<std::vector<std::string>>();
        else if (k == "roster") c.roster = a.get<std::string>();
        else return false;
        return true;
      });
    } else if (key == "training") {
      for_keys(v, "training", [&](const std::string& k, const json& a) {
        if (k == "mode") c.mode = a.get<std::string>();
        else if (k == "ibr_epochs_per_opponent") c.ibr_epochs_per_opponent = a.get<int>();
        else if (k == "checkpoint_every") c.checkpoint_every = a.get<int>();
        else if (k == "run_name") c.run_name = a.get<std::string>();
        else return false;
        return true;
      });
    } else if (key == "psro") {
      for_keys(v, "psro", [&](const std::string& k, const json& a) {
        if (k == "iterations") c.psro.iterations = a.get<int>();
        else if (k == "eval_episodes") c.psro.eval_episodes = a.get<int>();
        else if (k == "final_eval_episodes") c.psro.final_eval_episodes = a.get<int>();
        else if (k == "mss") c.psro.mss = a.get<std::string>();
        else if (k == "own_threshold") c.psro.own_threshold = a.get<double>();
        else if (k == "temperature") c.psro.temperature = a.get<double>();
        else if (k == "self_play") c.psro.self_play = a.get<bool>();
        else if (k == "specialists") c.psro.specialists = a.get<std::string>();
        else return false;
        return true;
      });
    } else if (key == "sweep") {
      for_keys(v, "sweep", [&](const std::string& k, const json& a) {
        if (k == "family") c.sweep.family = a.get<std::string>();
        else if (k == "parameter") c.sweep.parameter = a.get<std::string>();
        else if (k == "values") c.sweep.values = a.get<std::vector<double>>();
        else if (k == "fixed") c.sweep.fixed = a.get<std::string>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
  return c;
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

struct CommonFlags {
  std::string config;
  std::string preset;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out;
  int episodes = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* episodes_opt = nullptr;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON run config or a run manifest to replay");
    app->add_option("--preset", preset, "experiment preset (see the list below)");
    seed_opt = app->add_option("--seed", seed, "root seed");
    workers_opt = app->add_option("--workers", workers, "worker threads (results do not depend on it)")
                      ->check(CLI::PositiveNumber);
    out_opt = app->add_option("--out", out, "output directory");
    episodes_opt = app->add_option("--episodes", episodes, "episodes per cell / per opponent")
                       ->check(CLI::PositiveNumber);
  }
};

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

RunConfig resolve(const CommonFlags& f) {
  json file = json::object();
  if (!f.config.empty()) file = read_json_file(f.config);
  const json& body = file.contains("command") && file.contains("config") ? file["config"] : file;
  std::string preset = "paper-default";
  if (body.is_object() && body.contains("preset")) preset = body["preset"].get<std::string>();
  if (!f.preset.empty()) preset = f.preset;
  RunConfig c = apply_json(file, preset_config(preset));
  c.preset = preset;

  if (const char* dir = std::getenv(kEnvOutputDir); dir && *dir) c.output_dir = dir;
  if (const char* w = std::getenv(kEnvWorkers); w && *w) {
    try {
      c.workers = std::stoi(w);
    } catch (const std::exception&) {
      throw ConfigError(std::string(kEnvWorkers) + " must be an integer");
    }
  }
  if (f.seed_opt->count()) c.seed = f.seed;
  if (f.workers_opt->count()) c.workers = f.workers;
  if (f.out_opt->count()) c.output_dir = f.out;
  if (f.episodes_opt->count()) c.episodes = f.episodes;
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  if (c.episodes < 1) throw ConfigError("episodes must be >= 1");
  c.engine.validate();
  c.train.validate();
  return c;
}

std::string to_text(const std::function<void(std::ostream&)>& writer) {
  std::ostringstream os;
  writer(os);
  return os.str();
}

void finish_run(std::ostream& out, const std::string& command, const RunConfig& c,
                std::vector<fs::path> outputs) {
  const fs::path dir = c.output_dir;
  const json snapshot = to_json(c);
  outputs.push_back(write_output(dir, "config.json", snapshot.dump(2) + "\n"));
  const json manifest = make_manifest(command, snapshot, outputs);
  write_output(dir, "manifest.json", manifest.dump(2) + "\n");
  out << "wrote " << outputs.size() + 1 << " files to " << dir.string() << "\n";
}

std::string slug(const std::string& id) {
  std::string s;
  for (char ch : id) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.')
      s += ch;
    else if (ch == ':' || ch == ',' || ch == '=')
      s += '_';
  }
  return s;
}

std::string shown(const std::string& id) {
  try {
    return display_name(parse_heuristic(id));
  } catch (const SpecError&) {
    return id;
  }
}

std::string matrix_csv(const TournamentTable& t) {
  return to_text([&](std::ostream& os) {
    std::vector<std::string> header{"defender"};
    for (const auto& a : t.attackers) header.push_back(shown(a));
    csv::write_row(os, header);
    for (std::size_t d = 0; d < t.defenders.size(); ++d) {
      std::vector<std::string> row{shown(t.defenders[d])};
      for (std::size_t a = 0; a < t.attackers.size(); ++a) row.push_back(csv::format_number(t.at(d, a).mean));
      csv::write_row(os, row);
    }
  });
}

void print_row(std::ostream& out, const AgentRow& r) {
  out << std::left << std::setw(20) << r.agent << std::right;
  for (std::size_t i = 0; i < r.opponents.size(); ++i) {
    out << "  " << shown(r.opponents[i]) << " " << std::fixed << std::setprecision(1) << r.reward[i] << " ("
        << std::setprecision(1) << 100.0 * r.ownership[i] << "%)";
  }
  out << "  | avg " << std::setprecision(2) << r.average_reward() << " (" << std::setprecision(2)
      << 100.0 * r.average_ownership() << "%)\n";
  out.unsetf(std::ios::floatfield);
}

// Resumable epoch loop shared by specialist and IBR training.
std::vector<EpochStats> run_epochs(Trainer& trainer, const std::vector<OpponentFactory>& opponents,
                                   const std::function<std::size_t(int epoch)>& pick, int total,
                                   const fs::path& state_dir, int every, bool resume,
                                   std::ostream& out) {
  std::vector<EpochStats> curve;
  const fs::path state = state_dir / "trainer.state";
  const fs::path curve_file = state_dir / "curve.json";
  if (resume && fs::exists(state)) {
    std::ifstream in(state, std::ios::binary);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    trainer.load_state(bytes.str());
    std::ifstream cin(curve_file);
    if (!cin) throw ConfigError("resume state in " + state_dir.string() + " has no curve.json");
    for (const auto& e : json::parse(cin)) curve.push_back(epoch_stats_from_json(e));
    out << "resuming at epoch " << trainer.epochs_done() << "\n";
  }
  auto save = [&] {
    fs::create_directories(state_dir);
    std::ofstream s(state, std::ios::binary | std::ios::trunc);
    const std::string bytes = trainer.save_state();
    s.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    json j = json::array();
    for (const auto& e : curve) j.push_back(to_json(e));
    std::ofstream c(curve_file, std::ios::trunc);
    c << j.dump() << "\n";
  };
  while (trainer.epochs_done() < total) {
    const int epoch = trainer.epochs_done();
    curve.push_back(trainer.run_epoch(opponents, [&pick, epoch](Rng&) { return pick(epoch); }));
    if ((epoch + 1) % 10 == 0 || epoch + 1 == total)
      out << "epoch " << epoch + 1 << "/" << total << "  mean reward " << std::fixed
          << std::setprecision(2) << curve.back().mean_reward << "\n"
          << std::defaultfloat;
    if (every > 0 && (epoch + 1) % every == 0) save();
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_tournament(const RunConfig& c, std::ostream& out) {
  const auto table = tournament(c.engine, parse_all(c.defenders), parse_all(c.attackers), c.episodes,
                                c.seed, c.workers);
  print_matrix(out, table);
  std::vector<fs::path> files;
  files.push_back(write_output(c.output_dir, "tournament.csv",
                               to_text([&](std::ostream& os) { write_tournament_csv(os, table); })));
  files.push_back(write_output(c.output_dir, "tournament_matrix.csv", matrix_csv(table)));
  finish_run(out, "tournament", c, files);
  return kExitOk;
}

int cmd_sweep(const RunConfig& c, std::ostream& out) {
  std::vector<HeuristicSpec> grid, opponents;
  if (c.sweep.family.empty()) {
    grid = ablation_defenders();
    opponents = ablation_attackers();
  } else {
    if (c.sweep.parameter.empty() || c.sweep.values.empty())
      throw ConfigError("sweep: --family needs --param and --values");
    grid = expand_grid(c.sweep.family, c.sweep.parameter, c.sweep.values, c.sweep.fixed);
    opponents = c.attackers.empty() ? ablation_attackers() : parse_all(c.attackers);
  }
  const auto table = parameter_sweep(c.engine, grid, opponents, c.episodes, c.seed, c.workers);
  print_matrix(out, table);
  std::vector<fs::path> files;
  files.push_back(write_output(c.output_dir, "sweep.csv",
                               to_text([&](std::ostream& os) { write_tournament_csv(os, table); })));
  files.push_back(write_output(c.output_dir, "table2.csv", matrix_csv(table)));
  finish_run(out, "sweep", c, files);
  return kExitOk;
}

ResponseObjective objective_for(const RunConfig& c) {
  if (c.psro.mss == "uniform") return RewardObjective{};
  if (c.psro.mss == "own") return WinRateObjective{c.psro.own_threshold};
  if (c.psro.mss == "gap") {
    if (c.psro.specialists.empty() || !fs::exists(c.psro.specialists))
      throw ConfigError(
          "the gap meta-strategy needs specialist reference rewards; run "
          "`train --mode specialist --opponent pool` first and pass its specialists.json "
          "with --specialists");
    const json j = read_json_file(c.psro.specialists);
    NormGapObjective o;
    for (const auto& [id, v] : j.items()) o.specialist_rewards[id] = v.at("reward").get<double>();
    return o;
  }
  throw ConfigError("unknown --mss '" + c.psro.mss + "' (uniform, own, gap)");
}

std::string run_name(const RunConfig& c) {
  if (!c.run_name.empty()) return c.run_name;
  if (c.mode == "ibr") return "ibr";
  if (c.mode == "psro") {
    std::string name = "mss_";
    if (c.psro.mss == "own")
      name += "o" + std::to_string(static_cast<int>(std::lround(c.psro.own_threshold * 100)));
    else
      name += c.psro.mss;
    if (c.psro.self_play) name += "_selfplay";
    return name;
  }
  return "specialist";
}

int train_specialist_mode(const RunConfig& c, bool resume, std::ostream& out) {
  if (c.opponent.empty())
    throw ConfigError("train --mode specialist needs --opponent <spec> (or 'pool')");
  const std::vector<std::string> targets =
      c.opponent == "pool" ? c.pool : canonical_list(c.opponent);
  const fs::path dir = c.output_dir;
  const fs::path ref_file = dir / "specialists.json";
  json refs = fs::exists(ref_file) ? read_json_file(ref_file.string()) : json::object();
  std::vector<fs::path> files;
  for (const auto& id : targets) {
    const HeuristicSpec spec = parse_heuristic(id);
    const std::string name = "specialist_" + slug(id);
    out << "training " << name << "\n";
    const std::uint64_t run_seed = derive_seed(c.seed, {hash_string(id)});
    Trainer trainer(c.engine, c.train, run_seed);
    const std::vector<OpponentFactory> single{{id, [spec] { return make_heuristic(spec); }}};
    const auto curve = run_epochs(trainer, single, [](int) { return std::size_t{0}; },
                                  c.train.total_epochs, dir / (name + "_state"), c.checkpoint_every,
                                  resume, out);
    PolicyCheckpoint ckpt = trainer.checkpoint({{"trainer", "specialist"}, {"opponent", id}});
    const AgentRow row = evaluate_checkpoint(name, ckpt, c.engine, {spec}, c.episodes,
                                             derive_seed(c.seed, {hash_string("specialist-eval")}),
                                             c.workers);
    ckpt.metadata["reward"] = row.reward[0];
    print_row(out, row);
    const fs::path path = dir / (name + ".ckpt");
    save_checkpoint(ckpt, path);
    files.push_back(path);
    files.push_back(path.string() + ".json");
    files.push_back(write_output(dir, "curve_" + name + ".csv",
                                 to_text([&](std::ostream& os) { write_curve_csv(os, curve); })));
    refs[id] = {{"reward", row.reward[0]}, {"ownership", row.ownership[0]},
                {"checkpoint", path.filename().string()}};
  }
  files.push_back(write_output(dir, "specialists.json", refs.dump(2) + "\n"));
  finish_run(out, "train", c, files);
  return kExitOk;
}

int train_ibr_mode(const RunConfig& c, bool resume, std::ostream& out) {
  std::vector<std::string> order = c.order;
  if (order.empty()) order = canonical_list("awake:lambda=0.05; burst:phase=8,burst=3; periodic:phase=4; pc:phase=4; pac:phase=4");
  const auto specs = parse_all(order);
  const int per = c.ibr_epochs_per_opponent > 0
                      ? c.ibr_epochs_per_opponent
                      : std::max(1, c.train.total_epochs / static_cast<int>(order.size()));
  const std::string name = run_name(c);
  const PolicyPool pool(specs);
  const auto factories = pool.factories();
  Trainer trainer(c.engine, c.train, c.seed);
  const int total = per * static_cast<int>(order.size());
  const auto curve = run_epochs(trainer, factories,
                                [per](int epoch) { return static_cast<std::size_t>(epoch / per); },
                                total, fs::path(c.output_dir) / (name + "_state"), c.checkpoint_every,
                                resume, out);
  const PolicyCheckpoint ckpt =
      trainer.checkpoint({{"trainer", "ibr"}, {"order", order}, {"epochs_per_opponent", per}});
  std::vector<fs::path> files;
  const fs::path path = fs::path(c.output_dir) / (name + ".ckpt");
  save_checkpoint(ckpt, path);
  files.push_back(path);
  files.push_back(path.string() + ".json");
  files.push_back(write_output(c.output_dir, "curve_" + name + ".csv",
                               to_text([&](std::ostream& os) { write_curve_csv(os, curve); })));
  const AgentRow row = evaluate_checkpoint(name, ckpt, c.engine, parse_all(c.pool), c.episodes,
                                           derive_seed(c.seed, {hash_string("final-eval")}), c.workers);
  print_row(out, row);
  finish_run(out, "train", c, files);
  return kExitOk;
}

int train_psro_mode(const RunConfig& c, bool resume, std::ostream& out) {
  PsroConfig p;
  p.iterations = c.psro.iterations;
  p.eval_episodes = c.psro.eval_episodes;
  p.final_eval_episodes = c.psro.final_eval_episodes;
  p.objective = objective_for(c);
  p.temperature = c.psro.temperature;
  p.self_play = c.psro.self_play;
  p.seed = c.seed;
  p.workers = c.workers;
  p.train = c.train;
  p.game = c.engine;
  p.validate();
  const std::string name = run_name(c);
  const fs::path dir = c.output_dir;
  const fs::path state = dir / (name + "_state");

  PsroRunner runner(p, PolicyPool(parse_all(c.pool)));
  if (resume && fs::exists(state / "psro_state.json")) {
    runner.load(state);
    out << "resuming at iteration " << runner.iteration() << "\n";
  }
  const PsroResult r = runner.finish([&](const PsroRunner& run) {
    const int t = run.iteration();
    if (t % 10 == 0 || t == p.iterations) {
      const auto& row = run.partial().utilities.back();
      double avg = 0.0;
      for (double v : row.mean_reward) avg += v;
      out << "iteration " << t << "/" << p.iterations << "  pool reward " << std::fixed
          << std::setprecision(2) << avg / row.mean_reward.size() << "\n"
          << std::defaultfloat;
    }
    if (c.checkpoint_every > 0 && t % c.checkpoint_every == 0) run.save(state);
  });

  std::vector<fs::path> files;
  const fs::path path = dir / (name + ".ckpt");
  save_checkpoint(r.final_policy, path);
  files.push_back(path);
  files.push_back(path.string() + ".json");
  files.push_back(write_output(dir, "curve_" + name + ".csv",
                               to_text([&](std::ostream& os) { write_curve_csv(os, r.curve); })));
  files.push_back(write_output(dir, "sigma_" + name + ".csv", to_text([&](std::ostream& os) {
                                 write_sigma_csv(os, r.sigmas, r.sigma_ids);
                               })));
  files.push_back(write_output(dir, "utilities_" + name + ".csv", to_text([&](std::ostream& os) {
                                 write_utilities_csv(os, r.utilities);
                               })));
  files.push_back(write_output(dir, "pool_" + name + ".json", r.pool.manifest().dump(2) + "\n"));

  AgentRow row;
  row.agent = name;
  row.episodes = p.final_eval_episodes;
  for (const auto& e : r.final_evaluation) {
    row.opponents.push_back(e.id);
    const Summary s = summarize(e.rewards);
    row.reward.push_back(s.mean);
    row.reward_std.push_back(s.std);
    row.ownership.push_back(e.mean_ownership());
  }
  print_row(out, row);
  files.push_back(write_output(dir, "final_" + name + ".csv", to_text([&](std::ostream& os) {
                                 write_agent_table_csv(os, {row}, TableValue::kReward);
                               })));
  finish_run(out, "train", c, files);
  return kExitOk;
}

int cmd_train(const RunConfig& c, bool resume, std::ostream& out) {
  if (c.mode == "specialist") return train_specialist_mode(c, resume, out);
  if (c.mode == "ibr") return train_ibr_mode(c, resume, out);
  if (c.mode == "psro") return train_psro_mode(c, resume, out);
  throw ConfigError("unknown --mode '" + c.mode + "' (specialist, ibr, psro)");
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  if (c.checkpoints.empty() && c.baselines.empty())
    throw ConfigError("eval needs --checkpoint (repeatable) or --baseline");
  std::vector<HeuristicSpec> roster;
  std::string table_kind;
  if (c.roster == "pool") {
    roster = parse_all(c.pool);
    table_kind = "pool";
  } else if (c.roster == "transfer") {
    roster = parse_all(c.transfer);
    table_kind = "transfer";
  } else {
    roster = parse_heuristic_list(c.roster);
    table_kind = "custom";
  }
  const std::uint64_t seed = derive_seed(c.seed, {hash_string("eval")});
  std::vector<AgentRow> rows;
  for (const auto& path : c.checkpoints) {
    const PolicyCheckpoint ckpt = load_checkpoint(path);
    rows.push_back(evaluate_checkpoint(fs::path(path).stem().string(), ckpt, c.engine, roster,
                                       c.episodes, seed, c.workers));
    print_row(out, rows.back());
  }
  for (const auto& b : c.baselines) {
    rows.push_back(evaluate_heuristic(parse_heuristic(b), c.engine, roster, c.episodes, seed, c.workers));
    print_row(out, rows.back());
  }
  std::vector<fs::path> files;
  auto table = [&](const std::string& file, TableValue v) {
    files.push_back(write_output(c.output_dir, file, to_text([&](std::ostream& os) {
                                   write_agent_table_csv(os, rows, v);
                                 })));
  };
  if (table_kind == "pool") {
    table("table3.csv", TableValue::kReward);
    table("table4.csv", TableValue::kOwnershipPercent);
  } else if (table_kind == "transfer") {
    table("table5.csv", TableValue::kReward);
  } else {
    table("eval_reward.csv", TableValue::kReward);
    table("eval_ownership.csv", TableValue::kOwnershipPercent);
  }
  finish_run(out, "eval", c, files);
  return kExitOk;
}

std::unique_ptr<Policy> policy_from_arg(const std::string& arg, const GameConfig& game) {
  if (arg.size() > 5 && arg.ends_with(".ckpt")) {
    auto ckpt = std::make_shared<const PolicyCheckpoint>(load_checkpoint(arg));
    ckpt->check_compatible(game);
    return make_checkpoint_policy(ckpt, fs::path(arg).stem().string());
  }
  return make_heuristic(parse_heuristic(arg));
}

int cmd_export(const RunConfig& c, const std::string& defender, const std::string& attacker,
               int episode, std::ostream& out) {
  auto d = policy_from_arg(defender, c.engine);
  auto a = policy_from_arg(attacker, c.engine);
  const std::uint64_t seed = derive_seed(c.seed, {static_cast<std::uint64_t>(episode)});
  const EpisodeResult r = run_episode(c.engine, *d, *a, seed, true);
  out << "defender reward " << r.total_reward[0] << ", attacker reward " << r.total_reward[1]
      << ", defender ownership " << r.defender_ownership() << "\n";
  std::vector<fs::path> files;
  files.push_back(write_output(c.output_dir, "trace.csv",
                               to_text([&](std::ostream& os) { write_trace_csv(os, r.trace); })));
  finish_run(out, "export", c, files);
  return kExitOk;
}

std::string help_footer() {
  std::ostringstream os;
  os << "\nPresets:\n";
  for (const auto& p : presets()) os << "  " << std::left << std::setw(15) << p.name << p.description << "\n";
  os << "\nHeuristic spec grammar (lists are separated by ';'):\n" << heuristic_grammar();
  os << "\nEnvironment: " << kEnvOutputDir << " (output directory), " << kEnvWorkers
     << " (worker count)\n";
  os << "Exit codes: 0 success, 1 runtime error, 2 configuration error\n";
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PoolFlip: stealthy-takeover games, heuristic tournaments and Flip-PSRO training"};
  app.footer(help_footer());
  app.require_subcommand(1);

  std::array<CommonFlags, 5> common;
  std::string defenders, attackers;
  auto* tour = app.add_subcommand("tournament", "heuristic vs heuristic reward matrix");
  common[0].add_to(tour);
  tour->add_option("--defenders", defenders, "defender specs, ';'-separated (default: preset roster)");
  tour->add_option("--attackers", attackers, "attacker specs, ';'-separated (default: preset roster)");

  std::string family, parameter, values, fixed, opponents;
  auto* sweep = app.add_subcommand("sweep", "heuristic parameter sweep (default: the ablation grid)");
  common[1].add_to(sweep);
  sweep->add_option("--family", family, "heuristic family to sweep, e.g. pac");
  sweep->add_option("--param", parameter, "parameter name, e.g. phase");
  sweep->add_option("--values", values, "comma-separated values, e.g. 2,4,8");
  sweep->add_option("--fixed", fixed, "fixed parameters for every grid point, e.g. delay=0");
  sweep->add_option("--opponents", opponents, "opponent specs, ';'-separated");

  std::string mode, opponent, order, mss, self_play, specialists, name, train_json;
  double own_threshold = 0.5, temperature = 0.25;
  int iterations = 0, epochs = 0, episodes_per_epoch = 0, eval_episodes = 0, final_eval = 0,
      every = -1, per_opponent = 0;
  bool resume = false;
  auto* train = app.add_subcommand("train", "specialist, IBR or Flip-PSRO training");
  common[2].add_to(train);
  auto* mode_opt = train->add_option("--mode", mode, "specialist | ibr | psro");
  auto* opp_opt = train->add_option("--opponent", opponent, "specialist target spec, or 'pool'");
  auto* order_opt = train->add_option("--order", order, "IBR opponent order, ';'-separated specs");
  auto* mss_opt = train->add_option("--mss", mss, "uniform | own | gap");
  auto* thr_opt = train->add_option("--own-threshold", own_threshold, "ownership target for --mss own");
  auto* temp_opt = train->add_option("--temperature", temperature, "softmax temperature");
  auto* sp_opt = train->add_option("--self-play", self_play, "on | off");
  auto* spec_opt = train->add_option("--specialists", specialists, "specialists.json for --mss gap");
  auto* it_opt = train->add_option("--iterations", iterations, "PSRO iterations (one epoch each)");
  auto* ep_opt = train->add_option("--epochs", epochs, "total training epochs (specialist / IBR)");
  auto* epe_opt = train->add_option("--episodes-per-epoch", episodes_per_epoch, "episodes per epoch");
  auto* ee_opt = train->add_option("--eval-episodes", eval_episodes, "PSRO episodes per member per iteration");
  auto* fe_opt = train->add_option("--final-eval-episodes", final_eval, "PSRO final evaluation episodes");
  auto* per_opt = train->add_option("--epochs-per-opponent", per_opponent, "IBR epochs per opponent");
  auto* every_opt = train->add_option("--checkpoint-every", every, "save resumable state every N epochs/iterations (0: never)");
  auto* name_opt = train->add_option("--name", name, "run name used in output file names");
  auto* tj_opt = train->add_option("--train-config", train_json, "JSON object with TrainConfig overrides");
  train->add_flag("--resume", resume, "continue from the saved state in the output directory");

  std::vector<std::string> checkpoints, baselines;
  std::string roster;
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints against a roster");
  common[3].add_to(eval);
  eval->add_option("--checkpoint", checkpoints, "checkpoint file (repeatable)");
  eval->add_option("--baseline", baselines, "heuristic defender to tabulate alongside (repeatable)");
  eval->add_option("--roster", roster, "pool | transfer | ';'-separated specs");

  std::string exp_def, exp_att;
  int exp_episode = 0;
  auto* exp = app.add_subcommand("export", "write one episode's step-by-step trace CSV");
  common[4].add_to(exp);
  exp->add_option("--defender", exp_def, "defender spec or .ckpt file")->required();
  exp->add_option("--attacker", exp_att, "attacker spec or .ckpt file")->required();
  exp->add_option("--episode", exp_episode, "episode index under --seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const std::array<CLI::App*, 5> subs{tour, sweep, train, eval, exp};
    std::size_t which = 0;
    while (which < subs.size() && !subs[which]->parsed()) ++which;
    if (which == subs.size()) return kExitConfig;
    RunConfig c = resolve(common[which]);
    if (tour->parsed()) {
      if (!defenders.empty()) c.defenders = canonical_list(defenders);
      if (!attackers.empty()) c.attackers = canonical_list(attackers);
      return cmd_tournament(c, out);
    }
    if (sweep->parsed()) {
      if (!family.empty()) c.sweep.family = family;
      if (!parameter.empty()) c.sweep.parameter = parameter;
      if (!fixed.empty()) c.sweep.fixed = fixed;
      if (!values.empty()) {
        c.sweep.values.clear();
        for (const auto& v : csv::parse_row(values)) {
          try {
            c.sweep.values.push_back(csv::parse_number(v));
          } catch (const std::invalid_argument&) {
            throw ConfigError("sweep: '" + v + "' is not a number");
          }
        }
      }
      if (!opponents.empty()) c.attackers = canonical_list(opponents);
      else if (!c.sweep.family.empty() && !c.sweep.family.empty() && c.attackers == preset_config(c.preset).attackers)
        c.attackers.clear();
      return cmd_sweep(c, out);
    }
    if (train->parsed()) {
      if (mode_opt->count()) c.mode = mode;
      if (opp_opt->count()) c.opponent = opponent;
      if (order_opt->count()) c.order = canonical_list(order);
      if (mss_opt->count()) c.psro.mss = mss;
      if (thr_opt->count()) c.psro.own_threshold = own_threshold;
      if (temp_opt->count()) c.psro.temperature = temperature;
      if (sp_opt->count()) {
        if (self_play != "on" && self_play != "off") throw ConfigError("--self-play takes on or off");
        c.psro.self_play = self_play == "on";
      }
      if (spec_opt->count()) c.psro.specialists = specialists;
      if (it_opt->count()) c.psro.iterations = iterations;
      if (tj_opt->count()) {
        try {
          c.train = train_config_from_json(json::parse(train_json), c.train);
        } catch (const json::exception& e) {
          throw ConfigError(std::string("--train-config is not valid JSON: ") + e.what());
        }
      }
      if (ep_opt->count()) c.train.total_epochs = epochs;
      if (epe_opt->count()) c.train.episodes_per_epoch = episodes_per_epoch;
      if (ee_opt->count()) c.psro.eval_episodes = eval_episodes;
      if (fe_opt->count()) c.psro.final_eval_episodes = final_eval;
      if (per_opt->count()) c.ibr_epochs_per_opponent = per_opponent;
      if (every_opt->count()) c.checkpoint_every = every;
      if (name_opt->count()) c.run_name = name;
      c.train.validate();
      return cmd_train(c, resume, out);
    }
    if (eval->parsed()) {
      if (!checkpoints.empty()) c.checkpoints = checkpoints;
      if (!baselines.empty()) c.baselines = canonical(parse_all(baselines));
      if (!roster.empty()) c.roster = roster;
      return cmd_eval(c, out);
    }
    if (exp->parsed()) return cmd_export(c, exp_def, exp_att, exp_episode, out);
    return kExitConfig;
  } catch (const SpecError& e) {
    err << "error: " << e.what() << " (offending token: '" << e.token() << "')\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << "\n";
    if (e.kind() == CheckpointError::Kind::kVersion)
      err << "this build reads checkpoint format version " << PolicyCheckpoint::kFormatVersion << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace poolflip::cli
