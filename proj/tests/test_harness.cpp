#include "poolflip/harness.hpp"

#include "doctest.h"
#include "poolflip/csv.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace poolflip;
namespace fs = std::filesystem;

TEST_CASE("csv numbers round-trip exactly") {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, static_cast<int>(rng.below(20)) - 10);
    CHECK(csv::parse_number(csv::format_number(x)) == x);
  }
  CHECK(csv::format_number(50.0) == "50");
  CHECK(csv::format_number(-0.25) == "-0.25");
  CHECK(csv::format_number(0.1) == "0.1");
  CHECK(csv::format_number(7) == "7");
  CHECK_THROWS_AS(csv::parse_number("1.5x"), std::invalid_argument);
  CHECK_THROWS_AS(csv::parse_number(""), std::invalid_argument);
}

TEST_CASE("csv quoting") {
  CHECK(csv::field("plain") == "plain");
  CHECK(csv::field("a,b") == "\"a,b\"");
  CHECK(csv::field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  std::ostringstream os;
  csv::write_row(os, {"pac:phase=4,delay=0", "x", "q\"uote"});
  const std::string line = os.str();
  CHECK(line == "\"pac:phase=4,delay=0\",x,\"q\"\"uote\"\n");
  const auto back = csv::parse_row(line.substr(0, line.size() - 1));
  CHECK(back == std::vector<std::string>{"pac:phase=4,delay=0", "x", "q\"uote"});
  CHECK(csv::parse_row("a,,b") == std::vector<std::string>{"a", "", "b"});
  CHECK_THROWS_AS(csv::parse_row("\"open"), std::invalid_argument);

  std::istringstream is("h1,h2\n1,2\n3,4\n");
  const csv::Table t = csv::read_table(is);
  CHECK(t.header.size() == 2u);
  CHECK(t.rows.size() == 2u);
  CHECK(t.column("h2") == 1u);
  CHECK_THROWS_AS(t.column("h3"), std::out_of_range);
}

TEST_CASE("summary statistics") {
  const std::vector<double> v{0.0, 2.0};
  const Summary s = summarize(v);
  CHECK(s.mean == 1.0);
  CHECK(s.std == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.se == doctest::Approx(1.0));
  CHECK(summarize(std::vector<double>{5.0}).std == 0.0);
  CHECK_THROWS_AS(summarize(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("game config documents") {
  GameConfig g;
  g.horizon = 50;
  g.costs[1].check = 0.1;
  const GameConfig back = game_config_from_json(to_json(g));
  CHECK(back.horizon == 50);
  CHECK(back.costs[1].check == 0.1);
  CHECK(back.costs[0].check == 1.0);
  CHECK_THROWS_AS(game_config_from_json({{"steps", 10}}), ConfigError);
}

TEST_CASE("presets and rosters") {
  const auto& p = find_preset("paper-default");
  CHECK(p.game.horizon == 100);
  CHECK(p.game.costs[0].flip == 2.0);
  CHECK(p.pool.size() == 5u);
  CHECK(find_preset("cheap-check").game.costs[0].check == 0.1);
  CHECK_THROWS_AS(find_preset("nope"), ConfigError);
  CHECK(paper_pool().size() == 5u);
  CHECK(transfer_roster().size() == 7u);
  CHECK(figure1_roster().size() == 11u);
  for (const auto& preset : presets()) CHECK_NOTHROW(preset.game.validate());
}

TEST_CASE("tournament cells are seeded per matchup") {
  const GameConfig g;
  const std::vector<std::string> d{"periodic:phase=4,delay=0", "sleep"};
  const std::vector<std::string> a{"sleep", "awake:lambda=0.05"};
  const TournamentTable t = tournament(g, d, a, 30, 5, 1);
  REQUIRE(t.cells.size() == 4u);
  CHECK(t.at(0, 0).mean == 50.0);
  CHECK(t.at(0, 0).std == 0.0);
  CHECK(t.at(1, 0).mean == 100.0);
  CHECK(t.find("sleep", "awake:lambda=0.05").defender == "sleep");

  // Adding a row does not change existing cells.
  const TournamentTable bigger =
      tournament(g, {"pac:phase=4", d[0], d[1]}, a, 30, 5, 3);
  CHECK(bigger.find(d[1], a[1]).rewards == t.find(d[1], a[1]).rewards);

  CHECK(cell_seed(5, "a", "b") != cell_seed(5, "b", "a"));
  CHECK_THROWS_AS(tournament(g, {"bogus"}, a, 1, 0), SpecError);
}

TEST_CASE("tournament csv round trip") {
  const TournamentTable t = tournament(GameConfig{}, parse_heuristic_list("pc:phase=4; burst:phase=8,burst=3"),
                                       parse_heuristic_list("awake:lambda=0.05; pac:phase=8"), 20, 1, 2);
  std::ostringstream os;
  write_tournament_csv(os, t);
  std::istringstream is(os.str());
  const TournamentTable back = read_tournament_csv(is);
  CHECK(back.defenders == t.defenders);
  CHECK(back.attackers == t.attackers);
  for (std::size_t i = 0; i < t.cells.size(); ++i) {
    CHECK(back.cells[i].mean == t.cells[i].mean);
    CHECK(back.cells[i].std == t.cells[i].std);
    CHECK(back.cells[i].ownership == t.cells[i].ownership);
  }
  std::ostringstream again;
  write_tournament_csv(again, back);
  CHECK(again.str() == os.str());

  std::ostringstream m;
  print_matrix(m, t);
  CHECK(m.str().find("Awake(0.05)") != std::string::npos);
  CHECK(m.str().find("PC(4)") != std::string::npos);
}

TEST_CASE("parameter grids") {
  const auto grid = expand_grid("pac", "phase", {2, 4, 8});
  REQUIRE(grid.size() == 3u);
  CHECK(format_heuristic(grid[2]) == "pac:phase=8,delay=0");
  const auto with_fixed = expand_grid("periodic", "phase", {3}, "delay=1");
  CHECK(format_heuristic(with_fixed[0]) == "periodic:phase=3,delay=1");
  CHECK_THROWS_AS(expand_grid("pac", "speed", {1}), SpecError);
  CHECK_THROWS_AS(expand_grid("pac", "phase", {2.5}), SpecError);
  const auto sweep = parameter_sweep(GameConfig{}, grid, parse_heuristic_list("sleep"), 5, 0);
  CHECK(sweep.defenders.size() == 3u);
}

TEST_CASE("agent tables") {
  const auto roster = parse_heuristic_list("sleep; periodic:phase=4,delay=0");
  const AgentRow row = evaluate_heuristic(parse_heuristic("periodic:phase=4,delay=0"), GameConfig{},
                                          roster, 10, 0);
  CHECK(row.agent == "Periodic(4,d=0)");
  CHECK(row.reward[0] == 50.0);
  CHECK(row.average_reward() == doctest::Approx((row.reward[0] + row.reward[1]) / 2));
  std::ostringstream os;
  write_agent_table_csv(os, {row}, TableValue::kOwnershipPercent);
  std::istringstream is(os.str());
  const AgentTable t = read_agent_table_csv(is);
  CHECK(t.opponents == std::vector<std::string>{"Sleep", "Periodic(4,d=0)"});
  CHECK(t.agents[0] == row.agent);
  CHECK(t.values[0][0] == 100.0);
  CHECK(t.values[0].size() == 3u);
}

TEST_CASE("checkpoint evaluation checks dimensions") {
  PolicyCheckpoint ck;
  ck.params = init_network(NetworkShape{34, 3, {4}, false}, 0);
  const auto roster = parse_heuristic_list("sleep");
  const AgentRow r = evaluate_checkpoint("agent", ck, GameConfig{}, roster, 5, 0);
  CHECK(r.reward.size() == 1u);
  GameConfig two;
  two.num_resources = 2;
  CHECK_THROWS_AS(evaluate_checkpoint("agent", ck, two, roster, 5, 0), CheckpointError);
  const AgentRow t = transfer_eval("agent", ck, GameConfig{}, roster, 5, 0);
  CHECK(t.reward == r.reward);
}

TEST_CASE("manifests hash their outputs") {
  const fs::path dir = fs::temp_directory_path() / "poolflip_manifest";
  fs::remove_all(dir);
  const fs::path f = write_output(dir, "a.txt", "hello\n");
  CHECK(fs::exists(f));
  const auto m = make_manifest("tournament", {{"seed", 1}}, {f});
  CHECK(m.at("tool") == "poolflip");
  CHECK(m.at("version") == kVersion);
  CHECK(m.at("outputs")[0].at("file") == "a.txt");
  CHECK(m.at("outputs")[0].at("sha1") == "ce013625030ba8dba906f756967f9e9ca394464a");
}
