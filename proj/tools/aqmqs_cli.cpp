// Command-line front end: aqmqs <verb> --config scenario.json [flags]

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aqmqs/report.hpp"

namespace fs = std::filesystem;
using namespace aqmqs;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<double> dt, duration, warmup, kappa, tol;
  std::optional<std::string> mode;
};

Scenario load(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  json j = read_json_file(g.config);
  if (j.is_object() && j.contains("capacity")) j = json{{"network", j}};
  Scenario sc = scenario_from_json(j);
  if (g.dt) sc.simulation.dt = *g.dt;
  if (g.duration) sc.simulation.duration = *g.duration;
  if (g.warmup) sc.simulation.warmup = *g.warmup;
  if (g.kappa) sc.analysis.kappa = sc.simulation.kappa = *g.kappa;
  if (g.tol) sc.analysis.eps = *g.tol;
  if (g.mode) {
    try {
      sc.simulation.mode = parse_delay_mode(*g.mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--mode: ") + e.what());
    }
  }
  return sc;
}

// Write to --out/<name> when an output directory is given, else stdout.
void emit(const Globals& g, const std::string& name, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(g.out);
  std::ofstream f(fs::path(g.out) / name);
  if (!f) throw std::runtime_error("cannot write " + (fs::path(g.out) / name).string());
  f << text;
  std::cerr << "wrote " << (fs::path(g.out) / name).string() << '\n';
}

std::optional<StateFeedbackGains> default_gains(const Scenario& sc) {
  if (sc.analysis.gains) return sc.analysis.gains;
  if (sc.controller.preset == "sf-paper") return StateFeedbackGains::paper_example();
  return std::nullopt;
}

CertifyOptions certify_options(const Scenario& sc) {
  CertifyOptions o;
  o.form = sc.analysis.form;
  o.eps = sc.analysis.eps;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fluid-model AQM analysis: equilibrium, certificates, synthesis, simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "scenario or network JSON");
  app.add_option("--out", g.out, "output directory (default: stdout)");
  app.add_option("--dt", g.dt, "integration step [s]");
  app.add_option("--duration", g.duration, "simulated time [s]");
  app.add_option("--warmup", g.warmup, "discard samples before this time [s]");
  app.add_option("--kappa", g.kappa, "equilibrium constant kappa");
  app.add_option("--mode", g.mode, "delay mode: frozen | state-dep");
  app.add_option("--tol", g.tol, "strictness eps of the certificate");

  auto* eq_cmd = app.add_subcommand("equilibrium", "operating point");
  auto* lin_cmd = app.add_subcommand("linearize", "linear multi-delay model");
  auto* cert_cmd = app.add_subcommand("certify", "delay-dependent certificate for given gains");
  std::string form;
  bool iod = false;
  cert_cmd->add_option("--form", form, "condition layout: exact | printed");
  cert_cmd->add_flag("--iod", iod, "also report the delay-independent condition");
  std::string trace_path;
  cert_cmd->add_option("--trace", trace_path, "write the solver trace CSV here");
  auto* syn_cmd = app.add_subcommand("synthesize", "alternating gain synthesis");
  int budget = -1;
  syn_cmd->add_option("--budget", budget, "outer iteration budget");
  auto* sim_cmd = app.add_subcommand("simulate", "nonlinear closed-loop simulation");
  std::string controller;
  sim_cmd->add_option("--controller", controller, "droptail | red-paper | rem-paper | pi-paper | sf-paper | sf");
  auto* cmp_cmd = app.add_subcommand("compare", "metrics table across controllers");
  std::vector<std::string> controllers;
  cmp_cmd->add_option("--controllers", controllers, "controller presets");
  auto* met_cmd = app.add_subcommand("metrics", "statistics of a trajectory CSV");
  std::string traj_path;
  met_cmd->add_option("--trajectory", traj_path, "trajectory CSV")->required();
  auto* run_cmd = app.add_subcommand("run", "full scenario pipeline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    Scenario sc = load(g);
    if (!form.empty()) sc.analysis.form = parse_dd_form(form);

    if (*eq_cmd) {
      emit(g, "equilibrium.json", to_json(compute_equilibrium(sc.network, sc.split(), sc.analysis.kappa)).dump(2) + "\n");
    } else if (*lin_cmd) {
      const auto eq = compute_equilibrium(sc.network, sc.split(), sc.analysis.kappa);
      emit(g, "linear_model.json", to_json(linearize(eq, sc.network)).dump(2) + "\n");
    } else if (*cert_cmd) {
      const auto gains = default_gains(sc);
      if (!gains) throw ConfigError("certify: no gains (set analysis.gains or use the sf-paper controller)");
      const auto model = linearize(compute_equilibrium(sc.network, sc.split(), sc.analysis.kappa), sc.network);
      CertifyOptions copt = certify_options(sc);
      copt.solver.record_trace = !trace_path.empty();
      const GainCertificate c = check_gains(model, *gains, copt);
      if (!trace_path.empty()) {
        std::ofstream tf(trace_path);
        if (!tf) throw std::runtime_error("cannot write " + trace_path);
        lmi::write_trace_csv(tf, c.solve.trace);
      }
      json j = to_json(c);
      j["gains"] = to_json(*gains);
      if (iod || sc.analysis.iod) j["delay_independent"] = to_json(certify_iod(model, *gains, certify_options(sc)));
      emit(g, "certificate.json", j.dump(2) + "\n");
      return c.certified ? kOk : kSolverFailure;
    } else if (*syn_cmd) {
      const auto model = linearize(compute_equilibrium(sc.network, sc.split(), sc.analysis.kappa), sc.network);
      const StateFeedbackGains seed = sc.analysis.gains ? *sc.analysis.gains : StateFeedbackGains::zero(sc.network.size());
      const SynthesisResult r =
          synthesize_gains(model, seed, budget >= 0 ? budget : sc.analysis.outer_budget, certify_options(sc));
      emit(g, "synthesis.json", to_json(r).dump(2) + "\n");
      return r.converged ? kOk : kSolverFailure;
    } else if (*sim_cmd) {
      if (!controller.empty()) sc.controller = controller_from_json(json(controller), "--controller");
      const auto eq = compute_equilibrium(sc.network, sc.split(), sc.simulation.kappa);
      auto ctl = make_controller(sc.controller, sc.network, eq, default_gains(sc));
      const Trajectory traj = simulate_closed_loop(sc.network, eq, *ctl, simulation_options(sc.simulation));
      std::ostringstream csv;
      write_trajectory_csv(csv, traj);
      emit(g, "trajectory.csv", csv.str());
      if (!g.out.empty() && sc.simulation.duration > sc.simulation.warmup) {
        json mj = to_json(compute_metrics(traj, sc.network, sc.simulation.warmup));
        mj["controller"] = ctl->name();
        emit(g, "metrics.json", mj.dump(2) + "\n");
      }
    } else if (*cmp_cmd) {
      std::vector<ControllerSpec> specs = sc.compare;
      if (!controllers.empty()) {
        specs.clear();
        for (const auto& c : controllers) specs.push_back(controller_from_json(json(c), "--controllers"));
      }
      if (specs.empty()) throw ConfigError("compare: no controllers (give --controllers or a compare list)");
      std::ostringstream csv;
      write_comparison_csv(csv, compare_aqms(sc, specs, default_gains(sc)));
      emit(g, "comparison.csv", csv.str());
    } else if (*met_cmd) {
      std::ifstream in(traj_path);
      if (!in) throw ConfigError("--trajectory: cannot open " + traj_path);
      const Trajectory traj = read_trajectory_csv(in);
      emit(g, "metrics.json",
           to_json(compute_metrics(traj, sc.network, sc.simulation.warmup)).dump(2) + "\n");
    } else if (*run_cmd) {
      const RunSummary s = run_scenario(sc, g.out.empty() ? fs::path("out") / sc.name : fs::path(g.out));
      std::cerr << s.message << '\n';
      return s.exit_code;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const NonFiniteError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::domain_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
