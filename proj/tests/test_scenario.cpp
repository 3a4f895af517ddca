#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "aqmqs/report.hpp"
#include "fixtures.hpp"

namespace fs = std::filesystem;
using namespace aqmqs;

namespace {

const fs::path kScenarios = AQMQS_SCENARIO_DIR;
const std::string kCli = AQMQS_CLI_PATH;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("aqmqs_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "\"" + kCli + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string config_error_message(const json& j) {
  try {
    scenario_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

json toy_json() { return read_json_file((kScenarios / "toy-n1.json").string()); }

}  // namespace

TEST(Scenario, BundledFilesParse) {
  const Scenario sec4 = load_scenario((kScenarios / "paper-sec4.json").string());
  EXPECT_EQ(sec4.name, "paper-sec4");
  EXPECT_EQ(sec4.network.size(), 3u);
  EXPECT_DOUBLE_EQ(sec4.analysis.kappa, 4.0 / 3.0);
  EXPECT_TRUE(sec4.analysis.certify);
  ASSERT_TRUE(sec4.analysis.gains.has_value());
  EXPECT_EQ(sec4.analysis.gains->k2, StateFeedbackGains::paper_example().k2);
  EXPECT_EQ(sec4.compare.size(), 5u);
  EXPECT_EQ(sec4.simulation.mode, DelayMode::Frozen);

  const Scenario toy = load_scenario((kScenarios / "toy-n1.json").string());
  EXPECT_TRUE(toy.analysis.synthesize);
  EXPECT_EQ(toy.controller.preset, "sf");
  EXPECT_EQ(toy.analysis.gains->k1.size(), 1);
}

TEST(Scenario, ErrorsNameTheOffendingField) {
  json j = toy_json();
  j["network"].erase("capacity");
  EXPECT_EQ(config_error_message(j), "network.capacity: missing field");

  j = toy_json();
  j["network"]["sources"][0]["Tp"] = "slow";
  EXPECT_EQ(config_error_message(j), "network.sources[0].Tp: wrong type");

  j = toy_json();
  j["simulation"]["dtt"] = 0.1;
  EXPECT_NE(config_error_message(j).find("simulation.dtt"), std::string::npos);

  j = toy_json();
  j["controller"] = "codel";
  EXPECT_NE(config_error_message(j).find("controller.preset"), std::string::npos);

  j = toy_json();
  j["simulation"]["mode"] = "adaptive";
  EXPECT_NE(config_error_message(j).find("simulation.mode"), std::string::npos);

  j = toy_json();
  j["analysis"]["gains"] = {{"k1", {0.0, 0.0}}, {"k2", {0.0}}};
  EXPECT_NE(config_error_message(j).find("analysis.gains"), std::string::npos);

  j = toy_json();
  j["schema"] = "aqm-qsep/0";
  EXPECT_NE(config_error_message(j).find("schema"), std::string::npos);
}

TEST(Scenario, MalformedFileIsAConfigError) {
  const auto dir = scratch_dir("malformed");
  std::ofstream(dir / "bad.json") << "{\"network\": {\"capacity\": 10,";
  EXPECT_THROW(load_scenario((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_scenario((dir / "missing.json").string()), ConfigError);
}

TEST(Scenario, NetworkRoundTrip) {
  std::mt19937 rng(41);
  for (int n = 1; n <= 4; ++n) {
    const auto cfg = aqmqs::testing::random_config(rng, n);
    const auto back = network_from_json(json::parse(network_to_json(cfg).dump()));
    EXPECT_EQ(back.capacity, cfg.capacity);
    EXPECT_EQ(back.buffer_max, cfg.buffer_max);
    EXPECT_EQ(back.target_queue, cfg.target_queue);
    ASSERT_EQ(back.size(), cfg.size());
    for (std::size_t i = 0; i < cfg.size(); ++i) {
      EXPECT_EQ(back.sources[i].eta, cfg.sources[i].eta);
      EXPECT_EQ(back.sources[i].Tp, cfg.sources[i].Tp);
      EXPECT_EQ(back.sources[i].tau_f, cfg.sources[i].tau_f);
    }
  }
}

TEST(Compare, TableShapeAndDeterminism) {
  Scenario sc = load_scenario((kScenarios / "paper-sec4.json").string());
  sc.simulation.duration = 10.0;
  sc.simulation.warmup = 5.0;
  const auto t = compare_aqms(sc, sc.compare);
  ASSERT_EQ(t.controllers.size(), 5u);
  EXPECT_EQ(t.controllers, (std::vector<std::string>{"DT", "RED", "REM", "PI", "SF"}));
  std::ostringstream a, b;
  write_comparison_csv(a, t);
  write_comparison_csv(b, compare_aqms(sc, sc.compare));
  EXPECT_EQ(a.str(), b.str());

  std::istringstream is(a.str());
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(is, line)) rows.push_back(line.substr(0, line.find(',')));
  const std::vector<std::string> expected = {
      "metric", "queue_mean_pkt", "queue_std_pkt", "delay_ms", "jitter_ms",
      "user1_rate_mean_pkt_s", "user1_rate_std_pkt_s", "user2_rate_mean_pkt_s", "user2_rate_std_pkt_s",
      "user3_rate_mean_pkt_s", "user3_rate_std_pkt_s", "jain"};
  EXPECT_EQ(rows, expected);

  const auto single = compare_aqms(sc, {ControllerSpec{"pi-paper", json::object()}});
  std::ostringstream c;
  write_comparison_csv(c, single);
  EXPECT_EQ(c.str().substr(0, c.str().find('\n')), "metric,PI");
}

TEST(Pipeline, ToySynthesizeThenSimulate) {
  const auto dir = scratch_dir("toy");
  const auto s = run_scenario(load_scenario((kScenarios / "toy-n1.json").string()), dir);
  ASSERT_EQ(s.exit_code, kOk) << s.message;
  ASSERT_TRUE(s.synthesis.has_value());
  EXPECT_TRUE(s.synthesis->converged);
  for (const char* f : {"equilibrium.json", "linear_model.json", "synthesis.json", "trajectory.csv",
                        "metrics.json", "summary.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  // Zero gains certify; the queue creeps up to the target from below.
  const json m = json::parse(slurp(dir / "metrics.json"));
  EXPECT_GT(m["queue_mean_pkt"].get<double>(), 45.0);
  EXPECT_LT(m["queue_mean_pkt"].get<double>(), 50.0);
  std::istringstream traj(slurp(dir / "trajectory.csv"));
  const Trajectory t = read_trajectory_csv(traj);
  EXPECT_NEAR(t.queue.back(), 50.0, 0.5);
}

TEST(Pipeline, Sec4CertifiesAndSimulates) {
  const auto dir = scratch_dir("sec4");
  const auto s = run_scenario(load_scenario((kScenarios / "paper-sec4.json").string()), dir);
  ASSERT_EQ(s.exit_code, kOk) << s.message;
  const json c = json::parse(slurp(dir / "certificate.json"));
  EXPECT_EQ(c["verdict"], "feasible");
  const json lin = json::parse(slurp(dir / "linear_model.json"));
  EXPECT_NEAR(lin["h"][1].get<double>(), -0.051, 5e-4);
  const std::string traj = slurp(dir / "trajectory.csv");
  EXPECT_EQ(std::count(traj.begin(), traj.end(), '\n'), 100002);
  EXPECT_NEAR(s.metrics->queue_mean, 100.0, 10.0);
  EXPECT_TRUE(fs::exists(dir / "comparison.csv"));
}

TEST(Pipeline, FailingCertificateIsASolverExit) {
  const auto dir = scratch_dir("printed");
  Scenario sc = load_scenario((kScenarios / "paper-sec4.json").string());
  sc.analysis.form = DdForm::Printed;
  const auto s = run_scenario(sc, dir);
  EXPECT_EQ(s.exit_code, kSolverFailure);
  EXPECT_TRUE(fs::exists(dir / "certificate.json"));
  EXPECT_FALSE(fs::exists(dir / "trajectory.csv"));
  EXPECT_EQ(json::parse(slurp(dir / "summary.json"))["exit_code"].get<int>(), kSolverFailure);
}

TEST(Cli, VerbsAndExitCodes) {
  const auto dir = scratch_dir("cli");
  const std::string sec4 = "--config \"" + (kScenarios / "paper-sec4.json").string() + "\"";
  const std::string toy = "--config \"" + (kScenarios / "toy-n1.json").string() + "\"";

  EXPECT_EQ(run_cli("equilibrium " + sec4, dir / "eq.json"), 0);
  const json eq = json::parse(slurp(dir / "eq.json"));
  EXPECT_NEAR(eq["p0"][0].get<double>(), 9.508e-3, 1e-6);

  EXPECT_EQ(run_cli("linearize " + sec4 + " --kappa 1", dir / "lin.json"), 0);
  EXPECT_NEAR(json::parse(slurp(dir / "lin.json"))["A_d"][0][0].get<double>(), -2.2222, 1e-3);

  EXPECT_EQ(run_cli("certify " + sec4 + " --out \"" + (dir / "cert").string() + "\"", dir / "log1"), 0);
  EXPECT_TRUE(fs::exists(dir / "cert" / "certificate.json"));
  EXPECT_EQ(run_cli("certify " + sec4 + " --form printed", dir / "log2"), 3);

  EXPECT_EQ(run_cli("synthesize " + toy + " --budget 0", dir / "syn0.json"), 3);
  EXPECT_EQ(run_cli("synthesize " + toy, dir / "syn.json"), 0);

  EXPECT_EQ(run_cli("simulate " + sec4 + " --duration 2 --controller pi-paper --out \"" + (dir / "sim").string() + "\"",
                    dir / "log3"),
            0);
  ASSERT_TRUE(fs::exists(dir / "sim" / "trajectory.csv"));
  EXPECT_EQ(run_cli("metrics " + sec4 + " --warmup 1 --trajectory \"" + (dir / "sim" / "trajectory.csv").string() + "\"",
                    dir / "met.json"),
            0);
  EXPECT_GT(json::parse(slurp(dir / "met.json"))["samples"].get<int>(), 0);

  EXPECT_EQ(run_cli("compare " + sec4 + " --duration 2 --warmup 1 --controllers droptail pi-paper", dir / "cmp.csv"), 0);
  EXPECT_EQ(slurp(dir / "cmp.csv").substr(0, 14), "metric,DT,PI\nq");

  // Malformed configuration and bad flags.
  std::ofstream(dir / "bad.json") << "{\"network\": {\"buffer_max\": 10, \"target_queue\": 5, \"sources\": []}}";
  EXPECT_EQ(run_cli("run --config \"" + (dir / "bad.json").string() + "\"", dir / "log4"), 2);
  EXPECT_NE(slurp(dir / "log4").find("network.capacity"), std::string::npos);
  EXPECT_EQ(run_cli("simulate " + sec4 + " --mode warp", dir / "log5"), 2);
  EXPECT_EQ(run_cli("frobnicate", dir / "log6"), 2);
}
