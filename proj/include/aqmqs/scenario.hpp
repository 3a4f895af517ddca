#pragma once

// JSON scenario files: network description, controller choice, simulation
// and analysis settings. Parse errors raise ConfigError naming the field.

#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "aqmqs/aqm.hpp"
#include "aqmqs/errors.hpp"
#include "aqmqs/fluid_model.hpp"
#include "aqmqs/qs_stability.hpp"
#include "aqmqs/simulation.hpp"

namespace aqmqs {

using json = nlohmann::json;

inline constexpr const char* kSchemaVersion = "aqm-qsep/1";

namespace detail {

template <class T>
T get_field(const json& obj, const std::string& path, const std::string& key) {
  const std::string where = path.empty() ? key : path + "." + key;
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(where + ": missing field");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": wrong type");
  }
}

template <class T>
T get_or(const json& obj, const std::string& path, const std::string& key, T fallback) {
  if (!obj.is_object() || !obj.contains(key)) return fallback;
  return get_field<T>(obj, path, key);
}

inline Eigen::VectorXd get_vector(const json& obj, const std::string& path, const std::string& key) {
  const auto v = get_field<std::vector<double>>(obj, path, key);
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError((path.empty() ? "" : path + ".") + it.key() + ": unknown field");
  }
}

}  // namespace detail

// --- network -----------------------------------------------------------------

inline json network_to_json(const NetworkConfig& cfg) {
  json src = json::array();
  for (const auto& s : cfg.sources) src.push_back({{"eta", s.eta}, {"Tp", s.Tp}, {"tau_f", s.tau_f}});
  return {{"schema", kSchemaVersion},
          {"capacity", cfg.capacity},
          {"buffer_max", cfg.buffer_max},
          {"target_queue", cfg.target_queue},
          {"sources", src}};
}

inline NetworkConfig network_from_json(const json& j, const std::string& path = "network") {
  using detail::get_field;
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  detail::reject_unknown(j, path, {"schema", "capacity", "buffer_max", "target_queue", "sources"});
  if (j.contains("schema") && detail::get_field<std::string>(j, path, "schema") != kSchemaVersion)
    throw ConfigError(path + ".schema: expected \"" + std::string(kSchemaVersion) + "\"");
  NetworkConfig cfg;
  cfg.capacity = get_field<double>(j, path, "capacity");
  cfg.buffer_max = get_field<double>(j, path, "buffer_max");
  cfg.target_queue = get_field<double>(j, path, "target_queue");
  const json src = get_field<json>(j, path, "sources");
  if (!src.is_array()) throw ConfigError(path + ".sources: expected an array");
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::string sp = path + ".sources[" + std::to_string(i) + "]";
    detail::reject_unknown(src[i], sp, {"eta", "Tp", "tau_f"});
    SourceConfig s;
    s.eta = get_field<int>(src[i], sp, "eta");
    s.Tp = get_field<double>(src[i], sp, "Tp");
    s.tau_f = get_field<double>(src[i], sp, "tau_f");
    cfg.sources.push_back(s);
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

// --- controllers -------------------------------------------------------------

/// Preset name plus parameter overrides, e.g.
/// {"preset": "pi-paper", "overrides": {"q_ref": 120}}.
struct ControllerSpec {
  std::string preset = "sf-paper";
  json overrides = json::object();
};

inline const std::vector<std::string>& controller_presets() {
  static const std::vector<std::string> names = {"droptail", "red-paper", "rem-paper", "pi-paper",
                                                 "sf-paper", "sf"};
  return names;
}

inline ControllerSpec controller_from_json(const json& j, const std::string& path) {
  ControllerSpec c;
  if (j.is_string()) {
    c.preset = j.get<std::string>();
  } else {
    detail::reject_unknown(j, path, {"preset", "overrides"});
    c.preset = detail::get_field<std::string>(j, path, "preset");
    c.overrides = detail::get_or<json>(j, path, "overrides", json::object());
    if (!c.overrides.is_object()) throw ConfigError(path + ".overrides: expected an object");
  }
  bool known = false;
  for (const auto& p : controller_presets()) known = known || p == c.preset;
  if (!known) throw ConfigError(path + ".preset: unknown controller '" + c.preset + "'");
  return c;
}

/// Build a controller. `gains` supplies state-feedback gains for the "sf"
/// preset (typically from synthesis); "sf-paper" uses the published gains.
inline std::unique_ptr<AqmController> make_controller(const ControllerSpec& spec, const NetworkConfig& cfg,
                                                      const EquilibriumPoint& eq,
                                                      const std::optional<StateFeedbackGains>& gains = {}) {
  const std::string path = "controller(" + spec.preset + ").overrides";
  const json& o = spec.overrides;
  const std::size_t n = cfg.size();
  try {
    if (spec.preset == "droptail") {
      detail::reject_unknown(o, path, {});
      return std::make_unique<DropTailController>(cfg);
    }
    if (spec.preset == "red-paper") {
      detail::reject_unknown(o, path, {"min_th", "max_th", "w_q", "max_p", "fs"});
      RedParams p;
      p.min_th = detail::get_or(o, path, "min_th", p.min_th);
      p.max_th = detail::get_or(o, path, "max_th", p.max_th);
      p.w_q = detail::get_or(o, path, "w_q", p.w_q);
      p.max_p = detail::get_or(o, path, "max_p", p.max_p);
      p.fs = detail::get_or(o, path, "fs", p.fs);
      return std::make_unique<RedController>("RED", p, n);
    }
    if (spec.preset == "rem-paper") {
      detail::reject_unknown(o, path, {"gamma", "phi", "q_ref", "fs"});
      RemParams p;
      p.gamma = detail::get_or(o, path, "gamma", p.gamma);
      p.phi = detail::get_or(o, path, "phi", p.phi);
      p.q_ref = detail::get_or(o, path, "q_ref", p.q_ref);
      p.fs = detail::get_or(o, path, "fs", p.fs);
      return std::make_unique<RemController>("REM", p, n);
    }
    if (spec.preset == "pi-paper") {
      detail::reject_unknown(o, path, {"a", "b", "q_ref", "fs"});
      PiParams p;
      p.a = detail::get_or(o, path, "a", p.a);
      p.b = detail::get_or(o, path, "b", p.b);
      p.q_ref = detail::get_or(o, path, "q_ref", p.q_ref);
      p.fs = detail::get_or(o, path, "fs", p.fs);
      return std::make_unique<PiController>("PI", p, n);
    }
    // State feedback.
    detail::reject_unknown(o, path, {"k1", "k2"});
    StateFeedbackGains g;
    if (spec.preset == "sf-paper") {
      g = StateFeedbackGains::paper_example();
      if (n != 3) throw ConfigError("controller sf-paper: the published gains are for three sources");
    } else if (gains) {
      g = *gains;
    } else if (!o.contains("k1") || !o.contains("k2")) {
      throw ConfigError("controller sf: gains missing (give overrides.k1/k2 or enable synthesis)");
    }
    if (o.contains("k1")) g.k1 = detail::get_vector(o, path, "k1");
    if (o.contains("k2")) g.k2 = detail::get_vector(o, path, "k2");
    g.validate(n);
    return std::make_unique<StateFeedbackController>(eq, g);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// --- scenario ---------------------------------------------------------------

struct SimulationSpec {
  bool enabled = true;
  double kappa = 1.0;
  double duration = 100.0;
  double dt = 1e-3;
  DelayMode mode = DelayMode::Frozen;
  double initial_queue = 0.0;
  std::optional<Eigen::VectorXd> initial_rates;
  double warmup = 40.0;
};

struct AnalysisSpec {
  double kappa = 1.0;
  bool certify = false;
  bool synthesize = false;
  bool iod = false;
  DdForm form = DdForm::Exact;
  double eps = 1e-8;
  int outer_budget = 20;
  std::optional<StateFeedbackGains> gains;  // gains to certify / seed synthesis
};

struct Scenario {
  std::string name;
  NetworkConfig network;
  std::vector<double> rate_split;  // empty: fair
  ControllerSpec controller;
  SimulationSpec simulation;
  AnalysisSpec analysis;
  std::vector<ControllerSpec> compare;

  RateSplit split() const { return rate_split.empty() ? RateSplit::fair() : RateSplit::weighted(rate_split); }
};

inline DdForm parse_dd_form(const std::string& s) {
  if (s == "exact") return DdForm::Exact;
  if (s == "printed") return DdForm::Printed;
  throw ConfigError("unknown condition form '" + s + "' (expected exact|printed)");
}

inline Scenario scenario_from_json(const json& j) {
  using detail::get_or;
  if (!j.is_object()) throw ConfigError("scenario: expected an object");
  detail::reject_unknown(j, "", {"schema", "name", "network", "rate_split", "controller", "simulation",
                                 "analysis", "compare"});
  if (j.contains("schema") && detail::get_field<std::string>(j, "", "schema") != kSchemaVersion)
    throw ConfigError("schema: expected \"" + std::string(kSchemaVersion) + "\"");
  Scenario s;
  s.name = get_or<std::string>(j, "", "name", "scenario");
  s.network = network_from_json(detail::get_field<json>(j, "", "network"));
  if (j.contains("rate_split")) {
    if (j["rate_split"].is_string()) {
      if (j["rate_split"] != "fair") throw ConfigError("rate_split: expected \"fair\" or an array");
    } else {
      s.rate_split = detail::get_field<std::vector<double>>(j, "", "rate_split");
    }
  }
  if (j.contains("controller")) s.controller = controller_from_json(j["controller"], "controller");

  if (j.contains("simulation")) {
    const json& sj = j["simulation"];
    const std::string p = "simulation";
    detail::reject_unknown(sj, p, {"enabled", "kappa", "duration", "dt", "mode", "initial_queue",
                                   "initial_rates", "warmup"});
    auto& sim = s.simulation;
    sim.enabled = get_or(sj, p, "enabled", sim.enabled);
    sim.kappa = get_or(sj, p, "kappa", sim.kappa);
    sim.duration = get_or(sj, p, "duration", sim.duration);
    sim.dt = get_or(sj, p, "dt", sim.dt);
    try {
      sim.mode = parse_delay_mode(get_or<std::string>(sj, p, "mode", to_string(sim.mode)));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(p + ".mode: " + e.what());
    }
    sim.initial_queue = get_or(sj, p, "initial_queue", sim.initial_queue);
    if (sj.contains("initial_rates")) sim.initial_rates = detail::get_vector(sj, p, "initial_rates");
    sim.warmup = get_or(sj, p, "warmup", sim.warmup);
  }
  if (j.contains("analysis")) {
    const json& aj = j["analysis"];
    const std::string p = "analysis";
    detail::reject_unknown(aj, p, {"kappa", "certify", "synthesize", "iod", "form", "eps", "outer_budget", "gains"});
    auto& an = s.analysis;
    an.kappa = get_or(aj, p, "kappa", an.kappa);
    an.certify = get_or(aj, p, "certify", an.certify);
    an.synthesize = get_or(aj, p, "synthesize", an.synthesize);
    an.iod = get_or(aj, p, "iod", an.iod);
    an.form = parse_dd_form(get_or<std::string>(aj, p, "form", to_string(an.form)));
    an.eps = get_or(aj, p, "eps", an.eps);
    an.outer_budget = get_or(aj, p, "outer_budget", an.outer_budget);
    if (aj.contains("gains")) {
      const json& g = aj["gains"];
      if (g.is_string()) {
        if (g == "paper") an.gains = StateFeedbackGains::paper_example();
        else if (g == "zero") an.gains = StateFeedbackGains::zero(s.network.size());
        else throw ConfigError("analysis.gains: expected \"paper\", \"zero\" or {k1, k2}");
      } else {
        StateFeedbackGains sg;
        sg.k1 = detail::get_vector(g, p + ".gains", "k1");
        sg.k2 = detail::get_vector(g, p + ".gains", "k2");
        an.gains = sg;
      }
      try {
        an.gains->validate(s.network.size());
      } catch (const std::invalid_argument& e) {
        throw ConfigError("analysis.gains: " + std::string(e.what()));
      }
    }
  }
  if (j.contains("compare")) {
    const json& cj = j["compare"];
    if (!cj.is_array()) throw ConfigError("compare: expected an array of controllers");
    for (std::size_t i = 0; i < cj.size(); ++i)
      s.compare.push_back(controller_from_json(cj[i], "compare[" + std::to_string(i) + "]"));
  }
  return s;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": malformed JSON (" + e.what() + ")");
  }
}

inline Scenario load_scenario(const std::string& path) { return scenario_from_json(read_json_file(path)); }

}  // namespace aqmqs
