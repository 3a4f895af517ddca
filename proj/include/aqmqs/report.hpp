#pragma once

// JSON/CSV reports and the scenario pipeline
// (equilibrium -> linearize -> certify/synthesize -> simulate -> metrics).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aqmqs/errors.hpp"
#include "aqmqs/metrics.hpp"
#include "aqmqs/scenario.hpp"
#include "aqmqs/simulation.hpp"
#include "aqmqs/synthesis.hpp"

namespace aqmqs {

enum ExitCode : int { kOk = 0, kConfigError = 2, kSolverFailure = 3, kDivergence = 4 };

inline json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline json to_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline json to_json(const EquilibriumPoint& eq) {
  return {{"kappa", eq.kappa}, {"b0", eq.b0}, {"tau0", to_json(eq.tau0)}, {"tau_b0", to_json(eq.tau_b0)},
          {"x0", to_json(eq.x0)}, {"p0", to_json(eq.p0)}, {"W0", to_json(eq.W0)}};
}

inline json to_json(const LinearModel& m) {
  return {{"n_sources", m.n_sources}, {"A", to_json(m.A)}, {"A_d", to_json(m.A_d)}, {"B", to_json(m.B)},
          {"a", to_json(m.a)}, {"h", to_json(m.h)}, {"f", to_json(m.f)}, {"e", to_json(m.e)},
          {"tau_f", to_json(m.tau_f)}, {"tau_b", to_json(m.tau_b)}, {"tau", to_json(m.tau)}};
}

inline json to_json(const StateFeedbackGains& g) { return {{"k1", to_json(g.k1)}, {"k2", to_json(g.k2)}}; }

inline json to_json(const GainCertificate& c) {
  const auto& v = c.vars;
  return {{"verdict", c.certified ? "feasible" : "infeasible-within-budget"},
          {"form", to_string(c.form)},
          {"lambda_min", c.lambda_min},
          {"trace_scale", c.trace_scale},
          {"dimension", c.M.rows()},
          {"solver", {{"status", c.solve.status}, {"iterations", c.solve.iterations},
                      {"t", c.solve.lambda_min}, {"upper_bound", c.solve.upper_bound}}},
          {"variables",
           {{"P", to_json(v.P)}, {"q0f", to_json(v.q0f)}, {"q0b", to_json(v.q0b)}, {"q0", to_json(v.q0)},
            {"q1f", to_json(v.q1f)}, {"q1b", to_json(v.q1b)}, {"q1", to_json(v.q1)}}}};
}

inline json to_json(const IodCertificate& c) {
  return {{"verdict", c.certified ? "feasible" : "infeasible-within-budget"},
          {"lambda_min", c.lambda_min},
          {"dimension", c.M.rows()},
          {"variables", {{"P", to_json(c.P)}, {"qf", to_json(c.qf)}, {"qb", to_json(c.qb)}, {"q", to_json(c.q)}}}};
}

inline json to_json(const SynthesisResult& r) {
  return {{"converged", r.converged}, {"status", r.status}, {"outer_iterations", r.outer_iterations},
          {"gains", to_json(r.gains)}, {"step1_t", r.step1_t}, {"step2_t", r.step2_t},
          {"certificate", to_json(r.certificate)}};
}

inline json to_json(const MetricsReport& m) {
  return {{"warmup_s", m.warmup}, {"samples", m.samples}, {"queue_mean_pkt", m.queue_mean},
          {"queue_std_pkt", m.queue_std}, {"delay_ms", m.delay_ms}, {"jitter_ms", m.jitter_ms},
          {"rate_mean_pkt_s", to_json(m.rate_mean)}, {"rate_std_pkt_s", to_json(m.rate_std)},
          {"jain", m.jain}};
}

// --- trajectory CSV input ----------------------------------------------------

/// Reads the format written by write_trajectory_csv.
inline Trajectory read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trajectory CSV: empty input");
  std::size_t cols = 1;
  for (char ch : line) cols += ch == ',';
  if (cols < 4 || (cols - 2) % 2 != 0 || line.rfind("time,b", 0) != 0)
    throw ConfigError("trajectory CSV: unexpected header '" + line + "'");
  const auto n = static_cast<Eigen::Index>((cols - 2) / 2);
  Trajectory t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("trajectory CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (vals.size() != cols) throw ConfigError("trajectory CSV line " + std::to_string(lineno) + ": wrong column count");
    t.time.push_back(vals[0]);
    t.queue.push_back(vals[1]);
    t.rates.push_back(Eigen::Map<Eigen::VectorXd>(vals.data() + 2, n));
    t.drop.push_back(Eigen::Map<Eigen::VectorXd>(vals.data() + 2 + n, n));
  }
  if (t.time.size() >= 2) t.dt = t.time[1] - t.time[0];
  return t;
}

// --- comparison --------------------------------------------------------------

struct ComparisonTable {
  std::vector<std::string> controllers;
  std::vector<MetricsReport> reports;
};

inline SimulationOptions simulation_options(const SimulationSpec& s) {
  SimulationOptions o;
  o.duration = s.duration;
  o.dt = s.dt;
  o.mode = s.mode;
  o.initial_queue = s.initial_queue;
  if (s.initial_rates) o.initial_rates = *s.initial_rates;
  return o;
}

/// Same plant and simulation settings under each controller.
inline ComparisonTable compare_aqms(const Scenario& sc, const std::vector<ControllerSpec>& controllers,
                                    const std::optional<StateFeedbackGains>& sf_gains = {}) {
  const EquilibriumPoint eq = compute_equilibrium(sc.network, sc.split(), sc.simulation.kappa);
  ComparisonTable t;
  for (const auto& spec : controllers) {
    auto ctl = make_controller(spec, sc.network, eq, sf_gains);
    const Trajectory traj = simulate_closed_loop(sc.network, eq, *ctl, simulation_options(sc.simulation));
    t.controllers.push_back(ctl->name());
    t.reports.push_back(compute_metrics(traj, sc.network, sc.simulation.warmup));
  }
  return t;
}

/// One row per metric, one column per controller; per-user rate rows follow
/// the queue statistics.
inline void write_comparison_csv(std::ostream& os, const ComparisonTable& t) {
  os << "metric";
  for (const auto& c : t.controllers) os << ',' << c;
  os << '\n';
  char buf[40];
  auto row = [&](const std::string& name, auto&& get) {
    os << name;
    for (const auto& r : t.reports) {
      std::snprintf(buf, sizeof buf, "%.10g", get(r));
      os << ',' << buf;
    }
    os << '\n';
  };
  row("queue_mean_pkt", [](const MetricsReport& r) { return r.queue_mean; });
  row("queue_std_pkt", [](const MetricsReport& r) { return r.queue_std; });
  row("delay_ms", [](const MetricsReport& r) { return r.delay_ms; });
  row("jitter_ms", [](const MetricsReport& r) { return r.jitter_ms; });
  const Eigen::Index n = t.reports.empty() ? 0 : t.reports.front().rate_mean.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    row("user" + std::to_string(i + 1) + "_rate_mean_pkt_s", [i](const MetricsReport& r) { return r.rate_mean[i]; });
    row("user" + std::to_string(i + 1) + "_rate_std_pkt_s", [i](const MetricsReport& r) { return r.rate_std[i]; });
  }
  row("jain", [](const MetricsReport& r) { return r.jain; });
}

// --- pipeline ----------------------------------------------------------------

struct RunSummary {
  int exit_code = kOk;
  std::string message;
  std::vector<std::string> files;
  std::optional<GainCertificate> certificate;
  std::optional<SynthesisResult> synthesis;
  std::optional<MetricsReport> metrics;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text, RunSummary& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  s.files.push_back(p.filename().string());
}

}  // namespace detail

/// Run every stage the scenario enables and write its artifacts to out_dir.
/// A failing stage stops the pipeline; summary.json always records the
/// outcome and exit code.
inline RunSummary run_scenario(const Scenario& sc, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  RunSummary s;
  fs::create_directories(out_dir);
  auto finish = [&](int code, std::string msg) {
    s.exit_code = code;
    s.message = std::move(msg);
    json j = {{"scenario", sc.name}, {"exit_code", code}, {"message", s.message}, {"files", s.files}};
    detail::write_text(out_dir / "summary.json", j.dump(2) + "\n", s);
    return s;
  };

  // Analysis model.
  const EquilibriumPoint eq_an = compute_equilibrium(sc.network, sc.split(), sc.analysis.kappa);
  const LinearModel model = linearize(eq_an, sc.network);
  detail::write_text(out_dir / "equilibrium.json", to_json(eq_an).dump(2) + "\n", s);
  detail::write_text(out_dir / "linear_model.json", to_json(model).dump(2) + "\n", s);

  CertifyOptions copt;
  copt.form = sc.analysis.form;
  copt.eps = sc.analysis.eps;
  std::optional<StateFeedbackGains> gains = sc.analysis.gains;
  if (!gains && sc.controller.preset == "sf-paper") gains = StateFeedbackGains::paper_example();

  if (sc.analysis.synthesize) {
    const StateFeedbackGains seed = gains ? *gains : StateFeedbackGains::zero(sc.network.size());
    SynthesisResult r = synthesize_gains(model, seed, sc.analysis.outer_budget, copt);
    detail::write_text(out_dir / "synthesis.json", to_json(r).dump(2) + "\n", s);
    s.synthesis = r;
    if (!r.converged) return finish(kSolverFailure, "synthesis: " + r.status);
    gains = r.gains;
    s.certificate = r.certificate;
  }
  if (sc.analysis.certify) {
    if (!gains) throw ConfigError("analysis.certify: no gains to certify (set analysis.gains)");
    GainCertificate c = check_gains(model, *gains, copt);
    json j = to_json(c);
    j["gains"] = to_json(*gains);
    if (sc.analysis.iod) j["delay_independent"] = to_json(certify_iod(model, *gains, copt));
    detail::write_text(out_dir / "certificate.json", j.dump(2) + "\n", s);
    s.certificate = c;
    if (!c.certified) return finish(kSolverFailure, "certificate: infeasible within budget");
  }

  if (sc.simulation.enabled) {
    const EquilibriumPoint eq_sim = compute_equilibrium(sc.network, sc.split(), sc.simulation.kappa);
    std::optional<StateFeedbackGains> sf = s.synthesis ? std::optional(s.synthesis->gains) : gains;
    try {
      auto ctl = make_controller(sc.controller, sc.network, eq_sim, sf);
      const Trajectory traj = simulate_closed_loop(sc.network, eq_sim, *ctl, simulation_options(sc.simulation));
      std::ostringstream csv;
      write_trajectory_csv(csv, traj);
      detail::write_text(out_dir / "trajectory.csv", csv.str(), s);
      s.metrics = compute_metrics(traj, sc.network, sc.simulation.warmup);
      json mj = to_json(*s.metrics);
      mj["controller"] = ctl->name();
      detail::write_text(out_dir / "metrics.json", mj.dump(2) + "\n", s);
      if (!sc.compare.empty()) {
        std::ostringstream cmp;
        write_comparison_csv(cmp, compare_aqms(sc, sc.compare, sf));
        detail::write_text(out_dir / "comparison.csv", cmp.str(), s);
      }
    } catch (const NonFiniteError& e) {
      return finish(kDivergence, std::string("simulation diverged: ") + e.what());
    }
  }
  return finish(kOk, "ok");
}

}  // namespace aqmqs
