#include "poolflip/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "poolflip/csv.hpp"
#include "poolflip/metagame.hpp"
#include "poolflip/parallel.hpp"

namespace poolflip {

// ---------------------------------------------------------------------------
// Statistics

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  s.count = static_cast<int>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.count;
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (s.count - 1));
  }
  s.se = s.std / std::sqrt(static_cast<double>(s.count));
  return s;
}

// ---------------------------------------------------------------------------
// Configuration documents

namespace {

nlohmann::json costs_json(const ActionCosts& c) {
  return {{"sleep", c.sleep}, {"check", c.check}, {"flip", c.flip}};
}

ActionCosts costs_from_json(const nlohmann::json& j, ActionCosts c, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "sleep") c.sleep = v.get<double>();
    else if (k == "check") c.check = v.get<double>();
    else if (k == "flip") c.flip = v.get<double>();
    else throw ConfigError(where + ": unknown key '" + k + "'");
  }
  return c;
}

}  // namespace

nlohmann::json to_json(const GameConfig& c) {
  return {{"horizon", c.horizon},
          {"num_resources", c.num_resources},
          {"memory_limit", c.memory_limit},
          {"defender_costs", costs_json(c.costs[0])},
          {"attacker_costs", costs_json(c.costs[1])},
          {"defender_gain", c.gain[0]},
          {"attacker_gain", c.gain[1]},
          {"initial_owner", std::string(to_string(c.initial_owner))},
          {"base_seed", c.base_seed}};
}

GameConfig game_config_from_json(const nlohmann::json& j, GameConfig c) {
  if (!j.is_object()) throw ConfigError("engine config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "horizon") c.horizon = v.get<int>();
      else if (key == "num_resources") c.num_resources = v.get<int>();
      else if (key == "memory_limit") c.memory_limit = v.get<int>();
      else if (key == "costs") c.costs = {costs_from_json(v, c.costs[0], "costs"), costs_from_json(v, c.costs[1], "costs")};
      else if (key == "defender_costs") c.costs[0] = costs_from_json(v, c.costs[0], key);
      else if (key == "attacker_costs") c.costs[1] = costs_from_json(v, c.costs[1], key);
      else if (key == "gain") c.gain = {v.get<double>(), v.get<double>()};
      else if (key == "defender_gain") c.gain[0] = v.get<double>();
      else if (key == "attacker_gain") c.gain[1] = v.get<double>();
      else if (key == "initial_owner") {
        const auto s = v.get<std::string>();
        if (s == "defender") c.initial_owner = Player::kDefender;
        else if (s == "attacker") c.initial_owner = Player::kAttacker;
        else throw ConfigError("engine: initial_owner must be 'defender' or 'attacker'");
      } else if (key == "base_seed") c.base_seed = v.get<std::uint64_t>();
      else throw ConfigError("engine: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("engine: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Presets

std::vector<HeuristicSpec> paper_pool() {
  return parse_heuristic_list(
      "periodic:phase=4; burst:phase=8,burst=3; awake:lambda=0.05; pc:phase=4; pac:phase=4");
}

std::vector<HeuristicSpec> figure1_roster() {
  return parse_heuristic_list(
      "sleep; random:p=0.33; periodic:phase=4; periodic:phase=8; burst:phase=8,burst=3; "
      "awake:lambda=0.05; reta:phase=4; pc:phase=4; pac:phase=4; pac:phase=8; upac");
}

std::vector<HeuristicSpec> transfer_roster() {
  return parse_heuristic_list(
      "periodic:phase=6; periodic:phase=8; burst:phase=8,burst=6; burst:phase=16,burst=3; "
      "pc:phase=8; pac:phase=6; pac:phase=8");
}

std::vector<HeuristicSpec> ablation_defenders() {
  return parse_heuristic_list(
      "awake:lambda=0.05; awake:lambda=0.5; reta:phase=2; reta:phase=4; reta:phase=8; "
      "pac:phase=2; pac:phase=4; pac:phase=8");
}

std::vector<HeuristicSpec> ablation_attackers() {
  return parse_heuristic_list(
      "awake:lambda=0.05; awake:lambda=0.5; reta:phase=2; reta:phase=4; reta:phase=8; "
      "pac:phase=2; pac:phase=4; pac:phase=8");
}

nlohmann::json ExperimentPreset::to_json() const {
  auto ids = [](const std::vector<HeuristicSpec>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(format_heuristic(s));
    return out;
  };
  return {{"name", name},
          {"description", description},
          {"engine", poolflip::to_json(game)},
          {"pool", ids(pool)},
          {"roster", ids(roster)},
          {"transfer", ids(transfer)},
          {"episodes", episodes},
          {"seed", seed},
          {"temperature", temperature}};
}

const std::vector<ExperimentPreset>& presets() {
  static const std::vector<ExperimentPreset> all = [] {
    std::vector<ExperimentPreset> v;
    ExperimentPreset base;
    base.game = GameConfig{};
    base.pool = paper_pool();
    base.roster = figure1_roster();
    base.transfer = transfer_roster();

    ExperimentPreset paper = base;
    paper.name = "paper-default";
    paper.description = "T=100, one resource, costs sleep 0 / check 1 / flip 2, gain 1";
    v.push_back(paper);

    ExperimentPreset cheap = base;
    cheap.name = "cheap-check";
    cheap.description = "paper-default with the check cost at 1/20 of the flip cost (0.1)";
    cheap.game.set_symmetric({0.0, 0.1, 2.0}, 1.0);
    v.push_back(cheap);

    ExperimentPreset self_play = base;
    self_play.name = "self-play";
    self_play.description = "flip cost 2, check cost 0.1, for self-play pool extension";
    self_play.game.set_symmetric({0.0, 0.1, 2.0}, 1.0);
    v.push_back(self_play);
    return v;
  }();
  return all;
}

const ExperimentPreset& find_preset(const std::string& name) {
  std::string known;
  for (const auto& p : presets()) {
    if (p.name == name) return p;
    known += (known.empty() ? "" : ", ") + p.name;
  }
  throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

// ---------------------------------------------------------------------------
// Tournaments

const MatchupResult& TournamentTable::find(const std::string& defender,
                                           const std::string& attacker) const {
  for (const auto& c : cells)
    if (c.defender == defender && c.attacker == attacker) return c;
  throw std::out_of_range("no tournament cell " + defender + " vs " + attacker);
}

std::uint64_t cell_seed(std::uint64_t seed, const std::string& defender, const std::string& attacker) {
  return derive_seed(seed, {hash_string(defender), hash_string(attacker)});
}

TournamentTable tournament(const GameConfig& game, const std::vector<HeuristicSpec>& defenders,
                           const std::vector<HeuristicSpec>& attackers, int episodes,
                           std::uint64_t seed, int workers) {
  if (episodes < 1) throw ConfigError("tournament: episodes must be >= 1");
  if (defenders.empty() || attackers.empty()) throw ConfigError("tournament: empty roster");
  game.validate();
  for (const auto& s : defenders) validate(s);
  for (const auto& s : attackers) validate(s);

  TournamentTable t;
  for (const auto& s : defenders) t.defenders.push_back(format_heuristic(s));
  for (const auto& s : attackers) t.attackers.push_back(format_heuristic(s));
  t.cells.resize(defenders.size() * attackers.size());

  parallel_for(t.cells.size(), workers, [&](std::size_t k) {
    const std::size_t d = k / attackers.size();
    const std::size_t a = k % attackers.size();
    MatchupResult& m = t.cells[k];
    m.defender = t.defenders[d];
    m.attacker = t.attackers[a];
    m.episodes = episodes;
    auto def = make_heuristic(defenders[d]);
    auto att = make_heuristic(attackers[a]);
    const std::uint64_t cs = cell_seed(seed, m.defender, m.attacker);
    double attacker_own = 0.0;
    for (int e = 0; e < episodes; ++e) {
      const auto r = run_episode(game, *def, *att, derive_seed(cs, {static_cast<std::uint64_t>(e)}), false);
      m.rewards.push_back(r.defender_reward());
      m.ownerships.push_back(r.defender_ownership());
      attacker_own += r.ownership[1][0];
    }
    const Summary s = summarize(m.rewards);
    m.mean = s.mean;
    m.std = s.std;
    m.ownership = summarize(m.ownerships).mean;
    m.attacker_ownership = attacker_own / episodes;
  });
  return t;
}

TournamentTable tournament(const GameConfig& game, const std::vector<std::string>& defenders,
                           const std::vector<std::string>& attackers, int episodes,
                           std::uint64_t seed, int workers) {
  std::vector<HeuristicSpec> d, a;
  for (const auto& s : defenders) d.push_back(parse_heuristic(s));
  for (const auto& s : attackers) a.push_back(parse_heuristic(s));
  return tournament(game, d, a, episodes, seed, workers);
}

void write_tournament_csv(std::ostream& os, const TournamentTable& t) {
  csv::write_row(os, {"defender", "attacker", "episodes", "mean", "std", "ownership"});
  for (const auto& c : t.cells)
    csv::write_row(os, {c.defender, c.attacker, csv::format_number(c.episodes),
                        csv::format_number(c.mean), csv::format_number(c.std),
                        csv::format_number(c.ownership)});
}

TournamentTable read_tournament_csv(std::istream& is) {
  const csv::Table raw = csv::read_table(is);
  const auto cd = raw.column("defender"), ca = raw.column("attacker"), ce = raw.column("episodes"),
             cm = raw.column("mean"), cs = raw.column("std"), co = raw.column("ownership");
  TournamentTable t;
  for (const auto& row : raw.rows) {
    MatchupResult m;
    m.defender = row.at(cd);
    m.attacker = row.at(ca);
    m.episodes = static_cast<int>(csv::parse_number(row.at(ce)));
    m.mean = csv::parse_number(row.at(cm));
    m.std = csv::parse_number(row.at(cs));
    m.ownership = csv::parse_number(row.at(co));
    m.attacker_ownership = 1.0 - m.ownership;
    if (std::find(t.defenders.begin(), t.defenders.end(), m.defender) == t.defenders.end())
      t.defenders.push_back(m.defender);
    if (std::find(t.attackers.begin(), t.attackers.end(), m.attacker) == t.attackers.end())
      t.attackers.push_back(m.attacker);
    t.cells.push_back(std::move(m));
  }
  if (t.cells.size() != t.defenders.size() * t.attackers.size())
    throw std::invalid_argument("tournament CSV is not a complete matrix");
  return t;
}

namespace {
std::string label(const std::string& id) {
  try {
    return display_name(parse_heuristic(id));
  } catch (const std::exception&) {
    return id;
  }
}
}  // namespace

void print_matrix(std::ostream& os, const TournamentTable& t) {
  std::size_t w0 = 8;
  for (const auto& d : t.defenders) w0 = std::max(w0, label(d).size() + 1);
  std::size_t w = 9;
  for (const auto& a : t.attackers) w = std::max(w, label(a).size() + 1);
  os << std::left << std::setw(static_cast<int>(w0)) << "D \\ A" << std::right;
  for (const auto& a : t.attackers) os << std::setw(static_cast<int>(w)) << label(a);
  os << '\n';
  for (std::size_t d = 0; d < t.defenders.size(); ++d) {
    os << std::left << std::setw(static_cast<int>(w0)) << label(t.defenders[d]) << std::right;
    for (std::size_t a = 0; a < t.attackers.size(); ++a) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f", t.at(d, a).mean);
      os << std::setw(static_cast<int>(w)) << buf;
    }
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<HeuristicSpec> expand_grid(const std::string& family, const std::string& parameter,
                                       const std::vector<double>& values, const std::string& fixed) {
  if (values.empty()) throw ConfigError("sweep: empty parameter grid");
  std::vector<HeuristicSpec> out;
  for (double v : values) {
    std::string text = family + ":" + parameter + "=" + csv::format_number(v);
    if (!fixed.empty()) text += "," + fixed;
    out.push_back(parse_heuristic(text));
  }
  return out;
}

TournamentTable parameter_sweep(const GameConfig& game, const std::vector<HeuristicSpec>& grid,
                                const std::vector<HeuristicSpec>& opponents, int episodes,
                                std::uint64_t seed, int workers) {
  if (grid.empty()) throw ConfigError("sweep: empty parameter grid");
  return tournament(game, grid, opponents, episodes, seed, workers);
}

// ---------------------------------------------------------------------------
// Checkpoint evaluation

double AgentRow::average_reward() const {
  return reward.empty() ? 0.0 : std::accumulate(reward.begin(), reward.end(), 0.0) / reward.size();
}

double AgentRow::average_ownership() const {
  return ownership.empty() ? 0.0
                           : std::accumulate(ownership.begin(), ownership.end(), 0.0) / ownership.size();
}

namespace {

AgentRow evaluate_row(const std::string& agent, const PolicyFactory& factory, const GameConfig& game,
                      const std::vector<HeuristicSpec>& opponents, int episodes, std::uint64_t seed,
                      int workers) {
  const PolicyPool pool(opponents);
  const auto evals = evaluate_against_pool(game, factory, pool, episodes, seed, workers);
  AgentRow row;
  row.agent = agent;
  row.episodes = episodes;
  for (const auto& e : evals) {
    row.opponents.push_back(e.id);
    const Summary s = summarize(e.rewards);
    row.reward.push_back(s.mean);
    row.reward_std.push_back(s.std);
    row.ownership.push_back(e.mean_ownership());
  }
  return row;
}

}  // namespace

AgentRow evaluate_checkpoint(const std::string& agent, const PolicyCheckpoint& checkpoint,
                             const GameConfig& game, const std::vector<HeuristicSpec>& opponents,
                             int episodes, std::uint64_t seed, int workers) {
  checkpoint.check_compatible(game);
  auto ckpt = std::make_shared<const PolicyCheckpoint>(checkpoint);
  return evaluate_row(agent, [ckpt, agent] { return make_checkpoint_policy(ckpt, agent); }, game,
                      opponents, episodes, seed, workers);
}

AgentRow evaluate_heuristic(const HeuristicSpec& defender, const GameConfig& game,
                            const std::vector<HeuristicSpec>& opponents, int episodes,
                            std::uint64_t seed, int workers) {
  validate(defender);
  return evaluate_row(display_name(defender), [defender] { return make_heuristic(defender); }, game,
                      opponents, episodes, seed, workers);
}

AgentRow transfer_eval(const std::string& agent, const PolicyCheckpoint& checkpoint,
                       const GameConfig& game, const std::vector<HeuristicSpec>& unseen,
                       int episodes, std::uint64_t seed, int workers) {
  return evaluate_checkpoint(agent, checkpoint, game, unseen, episodes, seed, workers);
}

void write_agent_table_csv(std::ostream& os, const std::vector<AgentRow>& rows, TableValue value) {
  if (rows.empty()) throw std::invalid_argument("agent table without rows");
  std::vector<std::string> header{"agent"};
  for (const auto& o : rows.front().opponents) {
    try {
      header.push_back(display_name(parse_heuristic(o)));
    } catch (const SpecError&) {
      header.push_back(o);
    }
  }
  header.push_back("average");
  csv::write_row(os, header);
  for (const auto& r : rows) {
    if (r.opponents != rows.front().opponents)
      throw std::invalid_argument("agent table rows use different opponents");
    std::vector<std::string> fields{r.agent};
    const double scale = value == TableValue::kReward ? 1.0 : 100.0;
    const auto& v = value == TableValue::kReward ? r.reward : r.ownership;
    for (double x : v) fields.push_back(csv::format_number(x * scale));
    fields.push_back(csv::format_number(
        (value == TableValue::kReward ? r.average_reward() : r.average_ownership()) * scale));
    csv::write_row(os, fields);
  }
}

AgentTable read_agent_table_csv(std::istream& is) {
  const csv::Table raw = csv::read_table(is);
  if (raw.header.size() < 3 || raw.header.front() != "agent" || raw.header.back() != "average")
    throw std::invalid_argument("not an agent table CSV");
  AgentTable t;
  t.opponents.assign(raw.header.begin() + 1, raw.header.end() - 1);
  for (const auto& row : raw.rows) {
    if (row.size() != raw.header.size()) throw std::invalid_argument("ragged agent table row");
    t.agents.push_back(row[0]);
    std::vector<double> values;
    for (std::size_t i = 1; i < row.size(); ++i) values.push_back(csv::parse_number(row[i]));
    t.values.push_back(std::move(values));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Manifests

std::filesystem::path write_output(const std::filesystem::path& dir, const std::string& name,
                                   const std::string& text) {
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return path;
}

nlohmann::json make_manifest(const std::string& command, const nlohmann::json& config,
                             const std::vector<std::filesystem::path>& outputs) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& p : outputs) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files.push_back({{"file", p.filename().string()}, {"sha1", content_hash(ss.str())}});
  }
  return {{"tool", "poolflip"},
          {"version", kVersion},
          {"command", command},
          {"config", config},
          {"outputs", files}};
}

}  // namespace poolflip
