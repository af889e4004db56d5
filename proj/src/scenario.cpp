// Copyright 2026 The insitu Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "insitu/scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "insitu/io.hpp"

namespace insitu {

ScenarioError::ScenarioError(std::string file, int line, std::string field, const std::string& message)
    : std::invalid_argument(file + ":" + (line > 0 ? std::to_string(line) : std::string("?")) + ": " + field +
                            ": " + message),
      field_(std::move(field)),
      line_(line) {}

StageError::StageError(std::string stage, const std::string& message)
    : std::runtime_error("stage '" + stage + "': " + message), stage_(std::move(stage)) {}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

enum class Dim { Frequency, Time, Rate, Angle, FrequencySquared, Dimensionless };

const std::map<std::string, double>& units_for(Dim d) {
  static const std::map<std::string, double> frequency{
      {"rad/ns", 1.0}, {"rad/us", 1e-3}, {"GHz", kTwoPi}, {"MHz", kTwoPi * 1e-3}, {"kHz", kTwoPi * 1e-6}};
  static const std::map<std::string, double> time{{"ns", 1.0}, {"us", 1e3}};
  static const std::map<std::string, double> rate{{"1/ns", 1.0}, {"1/us", 1e-3}};
  static const std::map<std::string, double> angle{{"rad", 1.0}, {"deg", std::numbers::pi / 180.0}};
  static const std::map<std::string, double> freq2{{"(rad/ns)^2", 1.0},
                                                   {"MHz^2", kTwoPi * 1e-3 * kTwoPi * 1e-3}};
  static const std::map<std::string, double> none{};
  switch (d) {
    case Dim::Frequency: return frequency;
    case Dim::Time: return time;
    case Dim::Rate: return rate;
    case Dim::Angle: return angle;
    case Dim::FrequencySquared: return freq2;
    case Dim::Dimensionless: return none;
  }
  return none;
}

const char* dim_name(Dim d) {
  switch (d) {
    case Dim::Frequency: return "a frequency (rad/ns, MHz, GHz, kHz, rad/us)";
    case Dim::Time: return "a time (ns, us)";
    case Dim::Rate: return "a rate (1/ns, 1/us)";
    case Dim::Angle: return "an angle (rad, deg)";
    case Dim::FrequencySquared: return "a squared frequency ((rad/ns)^2, MHz^2)";
    case Dim::Dimensionless: return "a plain number";
  }
  return "";
}

class Parser {
 public:
  explicit Parser(std::string file) : file_(std::move(file)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field, const std::string& msg) const {
    const int line = at.IsDefined() && at.Mark().line >= 0 ? at.Mark().line + 1 : -1;
    throw ScenarioError(file_, line, field, msg);
  }

  YAML::Node require(const YAML::Node& parent, const std::string& key, const std::string& path) const {
    if (!parent.IsMap()) fail(parent, path, "expected a mapping");
    YAML::Node n = parent[key];
    if (!n.IsDefined() || n.IsNull()) fail(parent, join(path, key), "required field is missing");
    return n;
  }

  void allow_keys(const YAML::Node& map, const std::string& path, std::initializer_list<const char*> keys) const {
    if (!map.IsMap()) fail(map, path, "expected a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
        fail(kv.first, join(path, key), "unknown field");
      }
    }
  }

  std::string text(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) fail(n, path, "expected a scalar");
    return n.as<std::string>();
  }

  double number(const YAML::Node& n, const std::string& path) const {
    const std::string s = text(n, path);
    double v = 0.0;
    std::size_t used = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail(n, path, "expected a number, got '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) fail(n, path, "expected a number, got '" + s + "'");
    return v;
  }

  long long integer(const YAML::Node& n, const std::string& path) const {
    const std::string s = text(n, path);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    fail(n, path, "expected an integer, got '" + s + "'");
  }

  /// "<number> <unit>", converted to internal units (rad/ns, ns, 1/ns, rad).
  double quantity(const YAML::Node& n, const std::string& path, Dim d) const {
    const std::string s = text(n, path);
    if (d == Dim::Dimensionless) return number(n, path);
    const auto space = s.find_first_of(" \t");
    if (space == std::string::npos) fail(n, path, std::string("missing unit; expected ") + dim_name(d));
    const std::string unit = s.substr(s.find_first_not_of(" \t", space));
    const auto& table = units_for(d);
    const auto it = table.find(unit);
    if (it == table.end()) fail(n, path, "unit '" + unit + "' is not " + dim_name(d));
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(s.substr(0, space), &used);
      if (used != space) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      fail(n, path, "expected '<number> <unit>', got '" + s + "'");
    }
    return v * it->second;
  }

  SignalSpec signal(const YAML::Node& n, const std::string& path) const {
    if (n.IsScalar()) return ConstantSignal{quantity(n, path, Dim::Frequency)};
    if (!n.IsMap()) fail(n, path, "expected a quantity or a signal mapping");
    const std::string shape = text(require(n, "shape", path), join(path, "shape"));
    auto opt = [&](const char* key, Dim d, double fallback) {
      const YAML::Node v = n[key];
      return v.IsDefined() ? quantity(v, join(path, key), d) : fallback;
    };
    if (shape == "constant") {
      allow_keys(n, path, {"shape", "value"});
      return ConstantSignal{quantity(require(n, "value", path), join(path, "value"), Dim::Frequency)};
    }
    if (shape == "sinusoid") {
      allow_keys(n, path, {"shape", "amplitude", "frequency", "phase"});
      return Sinusoid{quantity(require(n, "amplitude", path), join(path, "amplitude"), Dim::Frequency),
                      quantity(require(n, "frequency", path), join(path, "frequency"), Dim::Frequency),
                      opt("phase", Dim::Angle, 0.0)};
    }
    if (shape == "distorted_step") {
      allow_keys(n, path, {"shape", "amplitude", "step_time", "tau"});
      const double tau = opt("tau", Dim::Time, 20.0);
      if (!(tau > 0.0)) fail(n["tau"], join(path, "tau"), "must be positive");
      return DistortedStep{quantity(require(n, "amplitude", path), join(path, "amplitude"), Dim::Frequency),
                           opt("step_time", Dim::Time, 0.0), tau};
    }
    if (shape == "samples") {
      allow_keys(n, path, {"shape", "t0", "dt", "values"});
      SampledSignal s{opt("t0", Dim::Time, 0.0), quantity(require(n, "dt", path), join(path, "dt"), Dim::Time), {}};
      if (!(s.dt > 0.0)) fail(n["dt"], join(path, "dt"), "must be positive");
      const YAML::Node vals = require(n, "values", path);
      if (!vals.IsSequence() || vals.size() == 0) fail(vals, join(path, "values"), "expected a non-empty list");
      for (std::size_t i = 0; i < vals.size(); ++i) {
        s.values.push_back(quantity(vals[i], join(path, "values[" + std::to_string(i) + "]"), Dim::Frequency));
      }
      return s;
    }
    fail(n["shape"], join(path, "shape"), "unknown shape '" + shape + "' (constant, sinusoid, distorted_step, samples)");
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

DensityState parse_state(const Parser& p, const YAML::Node& n, const std::string& path, int qubits) {
  if (n.IsScalar() && n.as<std::string>() == "reference") {
    if (qubits != 2) p.fail(n, path, "'reference' is the two-qubit product state");
    return two_qubit_reference_state();
  }
  if (!n.IsSequence() || static_cast<int>(n.size()) != qubits) {
    p.fail(n, path, "expected 'reference' or a list of " + std::to_string(qubits) + " qubit states {p0, phase}");
  }
  std::vector<Ket> kets;
  for (std::size_t q = 0; q < n.size(); ++q) {
    const std::string at = path + "[" + std::to_string(q) + "]";
    p.allow_keys(n[q], at, {"p0", "phase"});
    const double p0 = p.number(p.require(n[q], "p0", at), Parser::join(at, "p0"));
    if (!(p0 >= 0.0 && p0 <= 1.0)) p.fail(n[q]["p0"], Parser::join(at, "p0"), "must be in [0, 1]");
    const YAML::Node ph = n[q]["phase"];
    kets.push_back(qubit_ket(p0, ph.IsDefined() ? p.quantity(ph, Parser::join(at, "phase"), Dim::Angle) : 0.0));
  }
  return DensityState::from_ket(product_ket(kets));
}

OperatorMatrix parse_operator(const Parser& p, const YAML::Node& n, const std::string& path, int qubits) {
  const std::string name = p.text(n, path);
  try {
    OperatorMatrix op = pauli_product(name, qubits);
    if (!is_hermitian(op)) p.fail(n, path, "'" + name + "' is not Hermitian");
    return op;
  } catch (const std::invalid_argument& e) {
    p.fail(n, path, e.what());
  }
}

void parse_model(const Parser& p, const YAML::Node& root, Scenario& sc, const std::vector<OperatorMatrix>& probe_obs) {
  const YAML::Node m = p.require(root, "model", "");
  const std::string kind = p.text(p.require(m, "kind", "model"), "model.kind");
  if (kind == "two_qubit") {
    p.allow_keys(m, "model", {"kind", "w1", "w2", "g", "initial_state"});
    sc.qubits = 2;
    auto coef = [&](const char* key) {
      const YAML::Node n = p.require(m, key, "model");
      if (n.IsScalar() && n.as<std::string>() == "unknown") return Coefficient::identify();
      return Coefficient::known(p.quantity(n, std::string("model.") + key, Dim::Frequency));
    };
    const Coefficient w1 = coef("w1"), w2 = coef("w2"), g = coef("g");
    if (!w1.unknown && !w2.unknown && !g.unknown) p.fail(m, "model", "all three coefficients are known; nothing to identify");
    const YAML::Node st = m["initial_state"];
    std::optional<DensityState> state;
    if (st.IsDefined()) state = parse_state(p, st, "model.initial_state", 2);
    std::vector<OperatorMatrix> obs = probe_obs;
    if (obs.empty()) obs.push_back(pauli_product("s1x", 2));
    sc.base = build_two_qubit_model(w1, w2, g, obs, {}, state);
    return;
  }
  if (kind != "qubits") p.fail(m["kind"], "model.kind", "unknown kind '" + kind + "' (two_qubit, qubits)");
  p.allow_keys(m, "model", {"kind", "qubits", "drift", "controls", "initial_state"});
  const long long q = p.integer(p.require(m, "qubits", "model"), "model.qubits");
  if (q < 1 || q > 2) p.fail(m["qubits"], "model.qubits", "must be 1 or 2");
  sc.qubits = static_cast<int>(q);
  std::vector<GeneratorTerm> drift;
  OperatorMatrix drift_h = OperatorMatrix::Zero(Eigen::Index{1} << q, Eigen::Index{1} << q);
  if (const YAML::Node d = m["drift"]; d.IsDefined()) {
    if (!d.IsSequence()) p.fail(d, "model.drift", "expected a list of terms");
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::string at = "model.drift[" + std::to_string(i) + "]";
      if (d[i]["hamiltonian"].IsDefined()) {
        p.allow_keys(d[i], at, {"hamiltonian", "coefficient"});
        drift_h += p.quantity(p.require(d[i], "coefficient", at), at + ".coefficient", Dim::Frequency) *
                   parse_operator(p, d[i]["hamiltonian"], at + ".hamiltonian", sc.qubits);
      } else if (d[i]["lindblad"].IsDefined()) {
        p.allow_keys(d[i], at, {"lindblad", "rate"});
        const double rate = p.quantity(p.require(d[i], "rate", at), at + ".rate", Dim::Rate);
        if (!(rate >= 0.0)) p.fail(d[i]["rate"], at + ".rate", "must be >= 0");
        drift.push_back(GeneratorTerm::lindblad(std::sqrt(rate) *
                                                parse_operator(p, d[i]["lindblad"], at + ".lindblad", sc.qubits)));
      } else {
        p.fail(d[i], at, "expected a 'hamiltonian' or 'lindblad' term");
      }
    }
  }
  if (drift_h.cwiseAbs().maxCoeff() > 0.0) drift.insert(drift.begin(), GeneratorTerm::hamiltonian(drift_h));
  const YAML::Node c = p.require(m, "controls", "model");
  if (!c.IsSequence() || c.size() == 0) p.fail(c, "model.controls", "expected a non-empty list");
  std::vector<GeneratorTerm> controls;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const std::string at = "model.controls[" + std::to_string(i) + "]";
    p.allow_keys(c[i], at, {"name", "hamiltonian"});
    names.push_back(p.text(p.require(c[i], "name", at), at + ".name"));
    controls.push_back(GeneratorTerm::hamiltonian(
        parse_operator(p, p.require(c[i], "hamiltonian", at), at + ".hamiltonian", sc.qubits)));
  }
  std::vector<OperatorMatrix> obs = probe_obs;
  if (obs.empty()) obs.push_back(pauli_product("s1x", sc.qubits));
  sc.base = ProbeModel{std::move(drift), std::move(controls), std::move(obs),
                       parse_state(p, p.require(m, "initial_state", "model"), "model.initial_state", sc.qubits),
                       std::move(names), {}};
}

std::vector<std::string> parse_observable_list(const Parser& p, const YAML::Node& n, const std::string& path,
                                               int qubits) {
  if (!n.IsSequence() || n.size() == 0) p.fail(n, path, "expected a non-empty list of observables");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    parse_operator(p, n[i], path + "[" + std::to_string(i) + "]", qubits);
    out.push_back(n[i].as<std::string>());
  }
  return out;
}

void parse_inversion(const Parser& p, const YAML::Node& n, Scenario& sc) {
  if (!n.IsDefined()) return;
  p.allow_keys(n, "inversion", {"derivative", "singular_threshold", "pinv_cutoff", "hold", "substeps",
                                "output_feedback", "dilation"});
  InversionConfig& c = sc.inversion;
  if (const YAML::Node d = n["derivative"]; d.IsDefined()) {
    if (d.IsScalar() && d.as<std::string>() == "three_point") {
      c.derivative_scheme = DerivativeScheme::three_point();
    } else if (d.IsMap() && d["savitzky_golay"].IsDefined()) {
      const YAML::Node sg = d["savitzky_golay"];
      p.allow_keys(sg, "inversion.derivative.savitzky_golay", {"window", "degree"});
      c.derivative_scheme = DerivativeScheme::savitzky_golay(
          static_cast<int>(p.integer(p.require(sg, "window", "inversion.derivative.savitzky_golay"),
                                     "inversion.derivative.savitzky_golay.window")),
          static_cast<int>(p.integer(p.require(sg, "degree", "inversion.derivative.savitzky_golay"),
                                     "inversion.derivative.savitzky_golay.degree")));
    } else {
      p.fail(d, "inversion.derivative", "expected 'three_point' or {savitzky_golay: {window, degree}}");
    }
  }
  if (n["singular_threshold"]) c.singular_threshold = p.number(n["singular_threshold"], "inversion.singular_threshold");
  if (n["pinv_cutoff"]) c.pinv_cutoff = p.number(n["pinv_cutoff"], "inversion.pinv_cutoff");
  if (const YAML::Node h = n["hold"]; h.IsDefined()) {
    const std::string v = p.text(h, "inversion.hold");
    if (v == "hold_last") {
      c.hold_policy = InversionConfig::HoldPolicy::HoldLast;
    } else if (v == "zero") {
      c.hold_policy = InversionConfig::HoldPolicy::Zero;
    } else {
      p.fail(h, "inversion.hold", "expected 'hold_last' or 'zero'");
    }
  }
  if (n["substeps"]) c.substeps = static_cast<int>(p.integer(n["substeps"], "inversion.substeps"));
  if (n["output_feedback"]) c.output_feedback = p.quantity(n["output_feedback"], "inversion.output_feedback", Dim::Rate);
  if (n["dilation"]) {
    sc.dilation = static_cast<int>(p.integer(n["dilation"], "inversion.dilation"));
    if (sc.dilation < 0) p.fail(n["dilation"], "inversion.dilation", "must be >= 0");
  }
  try {
    c.check();
  } catch (const std::invalid_argument& e) {
    p.fail(n, "inversion", e.what());
  }
}

std::size_t control_index(const Parser& p, const Scenario& sc, const YAML::Node& n, const std::string& path) {
  const std::string name = p.text(n, path);
  const auto& names = sc.base.control_names;
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) p.fail(n, path, "'" + name + "' is not an unknown signal of the model");
  return static_cast<std::size_t>(it - names.begin());
}

void parse_noise(const Parser& p, const YAML::Node& n, Scenario& sc) {
  if (!n.IsDefined()) return;
  if (!n.IsSequence()) p.fail(n, "noise", "expected a list of noise cases");
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string at = "noise[" + std::to_string(i) + "]";
    const YAML::Node c = n[i];
    p.allow_keys(c, at, {"name", "target", "band", "variance", "reference_frequency", "channel", "seeds"});
    NoiseCase nc;
    nc.name = p.text(p.require(c, "name", at), at + ".name");
    const std::string target = p.text(p.require(c, "target", at), at + ".target");
    if (target == "evolution") {
      nc.spec.target = NoiseSpec::Target::Evolution;
    } else if (target == "measurement") {
      nc.spec.target = NoiseSpec::Target::Measurement;
    } else {
      p.fail(c["target"], at + ".target", "expected 'evolution' or 'measurement'");
    }
    const std::string band = p.text(p.require(c, "band", at), at + ".band");
    if (band == "low") {
      nc.spec.band = NoiseSpec::Band::Low;
    } else if (band == "high") {
      nc.spec.band = NoiseSpec::Band::High;
    } else {
      p.fail(c["band"], at + ".band", "expected 'low' or 'high'");
    }
    const bool evo = nc.spec.target == NoiseSpec::Target::Evolution;
    nc.spec.variance = p.quantity(p.require(c, "variance", at), at + ".variance",
                                  evo ? Dim::FrequencySquared : Dim::Dimensionless);
    nc.spec.reference_frequency =
        p.quantity(p.require(c, "reference_frequency", at), at + ".reference_frequency", Dim::Frequency);
    if (evo) {
      nc.spec.channel = control_index(p, sc, p.require(c, "channel", at), at + ".channel");
    } else if (c["channel"].IsDefined()) {
      p.fail(c["channel"], at + ".channel", "only evolution noise targets a control channel");
    }
    if (c["seeds"]) {
      nc.seeds = static_cast<int>(p.integer(c["seeds"], at + ".seeds"));
      if (nc.seeds < 1) p.fail(c["seeds"], at + ".seeds", "must be >= 1");
    }
    try {
      nc.spec.check();
    } catch (const std::invalid_argument& e) {
      p.fail(c, at, e.what());
    }
    sc.noise.push_back(std::move(nc));
  }
}

void parse_lsq(const Parser& p, const YAML::Node& n, Scenario& sc) {
  if (!n.IsDefined()) return;
  p.allow_keys(n, "lsq", {"n_bins", "max_iters", "step_rule", "step", "tol", "fd_relative", "guesses"});
  LsqConfig c;
  c.integrator = sc.integrator;
  if (n["n_bins"]) c.n_bins = static_cast<int>(p.integer(n["n_bins"], "lsq.n_bins"));
  if (n["max_iters"]) c.max_iters = static_cast<int>(p.integer(n["max_iters"], "lsq.max_iters"));
  if (const YAML::Node r = n["step_rule"]; r.IsDefined()) {
    const std::string v = p.text(r, "lsq.step_rule");
    if (v == "backtracking") {
      c.step_rule = LsqConfig::StepRule::Backtracking;
    } else if (v == "fixed") {
      c.step_rule = LsqConfig::StepRule::FixedStep;
    } else {
      p.fail(r, "lsq.step_rule", "expected 'backtracking' or 'fixed'");
    }
  }
  if (n["step"]) c.step = p.number(n["step"], "lsq.step");
  if (n["tol"]) c.tol = p.number(n["tol"], "lsq.tol");
  if (n["fd_relative"]) c.fd_relative = p.number(n["fd_relative"], "lsq.fd_relative");
  const YAML::Node g = p.require(n, "guesses", "lsq");
  if (!g.IsSequence() || g.size() == 0) p.fail(g, "lsq.guesses", "expected a non-empty list");
  const auto& names = sc.base.control_names;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::string at = "lsq.guesses[" + std::to_string(i) + "]";
    if (!g[i].IsMap()) p.fail(g[i], at, "expected a mapping");
    LsqGuess guess;
    guess.name = p.text(p.require(g[i], "name", at), at + ".name");
    for (const auto& kv : g[i]) {
      const auto key = kv.first.as<std::string>();
      if (key != "name" && std::find(names.begin(), names.end(), key) == names.end()) {
        p.fail(kv.first, at + "." + key, "not an unknown signal of the model");
      }
    }
    for (const auto& name : names) {
      guess.initial_guess.push_back(p.signal(p.require(g[i], name, at), at + "." + name));
    }
    sc.lsq_guesses.push_back(std::move(guess));
  }
  try {
    c.initial_guess = sc.lsq_guesses.front().initial_guess;
    c.check();
  } catch (const std::invalid_argument& e) {
    p.fail(n, "lsq", e.what());
  }
  sc.lsq = c;
}

void parse_outputs(const Parser& p, const YAML::Node& n, Scenario& sc) {
  if (!n.IsDefined()) {
    sc.outputs = {Output::Verdict, Output::ForwardRecord, Output::InversionReport};
    return;
  }
  if (!n.IsSequence()) p.fail(n, "outputs", "expected a list");
  static const std::map<std::string, Output> names{{"verdict", Output::Verdict},
                                                   {"forward_record", Output::ForwardRecord},
                                                   {"inversion_report", Output::InversionReport},
                                                   {"ramsey_branches", Output::RamseyBranches},
                                                   {"lsq_result", Output::LsqResult}};
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string v = p.text(n[i], "outputs[" + std::to_string(i) + "]");
    const auto it = names.find(v);
    if (it == names.end()) p.fail(n[i], "outputs[" + std::to_string(i) + "]", "unknown output '" + v + "'");
    sc.outputs.insert(it->second);
  }
}

}  // namespace

ProbeModel Scenario::model_for(const ObservableSet& set) const {
  ProbeModel m = base;
  m.observables.clear();
  for (const auto& o : set.observables) m.observables.push_back(pauli_product(o, qubits));
  m.observable_names = set.observables;
  return m;
}

Scenario parse_scenario(const std::string& text, const std::string& source) {
  const Parser p(source);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ScenarioError(source, e.mark.line + 1, "<document>", e.msg);
  }
  if (!root.IsMap()) p.fail(root, "<document>", "expected a mapping at the top level");
  p.allow_keys(root, "", {"name", "description", "model", "signals", "observables", "variants", "horizon",
                          "integrator", "inversion", "noise", "lsq", "outputs", "seed"});
  Scenario sc;
  sc.source = source;
  sc.text = text;
  sc.name = p.text(p.require(root, "name", ""), "name");
  if (sc.name.empty() || sc.name.find_first_of("/\\ ") != std::string::npos) {
    p.fail(root["name"], "name", "must be a non-empty identifier without spaces or slashes");
  }
  if (root["description"]) sc.description = p.text(root["description"], "description");

  // The qubit count is needed to parse observables, so the model comes first.
  parse_model(p, root, sc, {});
  const std::size_t m = sc.base.inputs();

  const YAML::Node obs = p.require(root, "observables", "");
  sc.observable_sets.push_back({"primary", parse_observable_list(p, obs, "observables", sc.qubits)});
  if (const YAML::Node v = root["variants"]; v.IsDefined()) {
    if (!v.IsSequence()) p.fail(v, "variants", "expected a list of {name, observables}");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string at = "variants[" + std::to_string(i) + "]";
      p.allow_keys(v[i], at, {"name", "observables"});
      ObservableSet set{p.text(p.require(v[i], "name", at), at + ".name"),
                        parse_observable_list(p, p.require(v[i], "observables", at), at + ".observables", sc.qubits)};
      for (const auto& prev : sc.observable_sets) {
        if (prev.name == set.name) p.fail(v[i]["name"], at + ".name", "duplicate variant name '" + set.name + "'");
      }
      sc.observable_sets.push_back(std::move(set));
    }
  }
  for (std::size_t s = 0; s < sc.observable_sets.size(); ++s) {
    const auto& set = sc.observable_sets[s];
    if (set.observables.size() < m) {
      const YAML::Node at = s == 0 ? obs : root["variants"][s - 1]["observables"];
      std::ostringstream msg;
      msg << "under-instrumented: " << set.observables.size() << " observables for " << m
          << " unknown signals; the transformed observable array must reach rank m, which needs at least m "
             "measured outputs";
      p.fail(at, s == 0 ? "observables" : "variants[" + std::to_string(s - 1) + "].observables", msg.str());
    }
  }
  sc.base = sc.model_for(sc.observable_sets.front());

  const YAML::Node sig = p.require(root, "signals", "");
  if (!sig.IsMap()) p.fail(sig, "signals", "expected a mapping from unknown signal name to its truth");
  for (const auto& kv : sig) {
    const auto key = kv.first.as<std::string>();
    const auto& names = sc.base.control_names;
    if (std::find(names.begin(), names.end(), key) == names.end()) {
      p.fail(kv.first, "signals." + key, "not an unknown signal of the model");
    }
  }
  for (const auto& name : sc.base.control_names) sc.truth.push_back(p.signal(p.require(sig, name, "signals"), "signals." + name));

  sc.horizon = p.quantity(p.require(root, "horizon", ""), "horizon", Dim::Time);
  if (!(sc.horizon > 0.0)) p.fail(root["horizon"], "horizon", "must be positive");
  if (const YAML::Node ic = root["integrator"]; ic.IsDefined()) {
    p.allow_keys(ic, "integrator", {"dt", "sample_every"});
    if (ic["dt"]) sc.integrator.dt = p.quantity(ic["dt"], "integrator.dt", Dim::Time);
    if (ic["sample_every"]) sc.integrator.sample_every = static_cast<int>(p.integer(ic["sample_every"], "integrator.sample_every"));
    try {
      sc.integrator.check();
    } catch (const std::invalid_argument& e) {
      p.fail(ic, "integrator", e.what());
    }
  }
  const double steps = sc.horizon / sc.integrator.dt;
  if (std::abs(steps - std::round(steps)) > 1e-6 * std::max(1.0, steps)) {
    p.fail(root["horizon"], "horizon", "must be a multiple of integrator.dt");
  }

  parse_inversion(p, root["inversion"], sc);
  parse_noise(p, root["noise"], sc);
  parse_lsq(p, root["lsq"], sc);
  parse_outputs(p, root["outputs"], sc);
  if (root["seed"]) {
    const long long s = p.integer(root["seed"], "seed");
    if (s < 0) p.fail(root["seed"], "seed", "must be >= 0");
    sc.seed = static_cast<std::uint64_t>(s);
  }

  if (sc.outputs.contains(Output::RamseyBranches)) {
    const auto& primary = sc.observable_sets.front().observables;
    if (sc.qubits != 1 || m != 1 || primary.size() != 1 || primary.front() != "s1x" || !sc.base.drift.empty()) {
      p.fail(root["outputs"], "outputs", "ramsey_branches needs the pure-phase probe: one qubit, no drift, one control, observables [s1x]");
    }
  }
  if (sc.outputs.contains(Output::LsqResult) && !sc.lsq) {
    p.fail(root["outputs"], "outputs", "lsq_result requested without an 'lsq' section");
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ScenarioError(path.string(), -1, "<file>", e.what());
  }
  return parse_scenario(text, path.string());
}

std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && (e.path().extension() == ".yaml" || e.path().extension() == ".yml")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

SignalSpec negated(const SignalSpec& s) {
  return std::visit(
      [](auto shape) -> SignalSpec {
        using T = std::decay_t<decltype(shape)>;
        if constexpr (std::is_same_v<T, ConstantSignal>) {
          shape.value = -shape.value;
        } else if constexpr (std::is_same_v<T, Sinusoid> || std::is_same_v<T, DistortedStep>) {
          shape.amplitude = -shape.amplitude;
        } else if constexpr (std::is_same_v<T, Multisine>) {
          for (auto& a : shape.amplitudes) a = -a;
        } else {
          for (auto& v : shape.values) v = -v;
        }
        return shape;
      },
      s.shape());
}

SignalTrace sample_signals(std::span<const SignalSpec> signals, const TimeSeries& grid) {
  SignalTrace out;
  out.t0 = grid.t0;
  out.dt = grid.dt;
  out.values.resize(grid.samples(), static_cast<Eigen::Index>(signals.size()));
  for (Eigen::Index k = 0; k < grid.samples(); ++k) {
    for (std::size_t j = 0; j < signals.size(); ++j) out.values(k, static_cast<Eigen::Index>(j)) = signals[j](grid.time(k));
  }
  return out;
}

nlohmann::json error_json(const std::vector<double>& e, const std::vector<std::string>& names) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i + 1 < e.size(); ++i) j[names[i]] = e[i];
  j["pooled"] = e.back();
  return j;
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& file, std::string_view bytes) {
    hashes_.emplace_back(file, io::write_file(dir_ / file, bytes));
  }
  void write_json(const std::string& file, const nlohmann::json& j) { write(file, j.dump(2) + "\n"); }

  const std::vector<std::pair<std::string, std::string>>& hashes() const { return hashes_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> hashes_;
};

template <class Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

}  // namespace

RunResult run_scenario(const Scenario& sc, const std::filesystem::path& out_root, const RunOptions& options) {
  const std::uint64_t seed = options.seed.value_or(sc.seed);
  RunResult result;
  result.directory = out_root / sc.name;
  stage("output", [&] {
    std::filesystem::create_directories(result.directory);
    return 0;
  });
  ArtifactWriter out(result.directory);
  nlohmann::json& summary = result.summary;
  summary["scenario"] = sc.name;
  summary["seed"] = seed;
  summary["units"] = {{"time", "ns"}, {"signal", "rad/ns"}};

  const std::size_t n_sets = sc.observable_sets.size();
  std::vector<ProbeModel> models;
  std::vector<InvertibilityVerdict> verdicts;
  std::vector<SimulationResult> sims;
  for (const auto& set : sc.observable_sets) models.push_back(sc.model_for(set));

  stage("verdict", [&] {
    for (std::size_t s = 0; s < n_sets; ++s) {
      verdicts.push_back(transform_observables(models[s]));
      nlohmann::json j = verdicts.back().to_json();
      j["observables"] = sc.observable_sets[s].observables;
      summary["sets"][sc.observable_sets[s].name]["verdict"] = j;
      if (sc.outputs.contains(Output::Verdict)) out.write_json("verdict_" + sc.observable_sets[s].name + ".json", j);
    }
    return 0;
  });

  stage("forward", [&] {
    for (std::size_t s = 0; s < n_sets; ++s) {
      sims.push_back(simulate(models[s], sc.truth, sc.horizon, sc.integrator));
      summary["sets"][sc.observable_sets[s].name]["out_of_range_samples"] = sims.back().record.out_of_range_count();
      if (sc.outputs.contains(Output::ForwardRecord)) {
        out.write("record_" + sc.observable_sets[s].name + ".csv", io::record_csv(sims.back().record));
      }
    }
    return 0;
  });

  const auto& names = sc.base.control_names;
  auto invert_and_score = [&](std::size_t s, const MeasurementRecord& record) {
    InversionReport rep = invert(models[s], verdicts[s], record, sc.inversion);
    const auto outside = relative_l2_error(rep.reconstructed, sc.truth, valid_mask(rep.flagged, sc.dilation));
    const auto full = relative_l2_error(rep.reconstructed, sc.truth, std::vector<bool>(rep.flagged.size(), true));
    return std::tuple{std::move(rep), outside, full};
  };

  if (!sc.noise.empty()) {
    stage("noise", [&] {
      if (!verdicts[0].invertible) throw std::runtime_error("primary observable set is not invertible");
      nlohmann::json cases = nlohmann::json::object();
      for (std::size_t c = 0; c < sc.noise.size(); ++c) {
        const NoiseCase& nc = sc.noise[c];
        std::vector<double> errors(static_cast<std::size_t>(nc.seeds));
        std::vector<std::size_t> windows(errors.size());
        std::vector<MeasurementRecord> first_record(1);
        std::vector<InversionReport> first_report(1);
        for_each_index(errors.size(), options.execution, [&](std::size_t r) {
          NoiseSpec spec = nc.spec;
          spec.seed = seed * 1000003ULL + (c + 1) * 10007ULL + r;
          MeasurementRecord record;
          if (spec.target == NoiseSpec::Target::Measurement) {
            record = inject_noise(sims[0].record, spec);
          } else {
            const auto noisy = inject_noise(sc.truth, spec);
            record = simulate(models[0], noisy, sc.horizon, sc.integrator).record;
          }
          auto [rep, outside, full] = invert_and_score(0, record);
          errors[r] = outside.back();
          windows[r] = rep.singular_windows.size();
          if (r == 0) {
            first_record[0] = std::move(record);
            first_report[0] = std::move(rep);
          }
        });
        std::ostringstream csv;
        csv << "repetition,rel_error,windows\n";
        for (std::size_t r = 0; r < errors.size(); ++r) csv << r << ',' << io::format_number(errors[r]) << ',' << windows[r] << '\n';
        out.write("noise_" + nc.name + ".csv", csv.str());
        if (sc.outputs.contains(Output::ForwardRecord)) out.write("record_" + nc.name + ".csv", io::record_csv(first_record[0]));
        if (sc.outputs.contains(Output::InversionReport)) out.write("report_" + nc.name + ".csv", io::report_csv(first_report[0]));
        cases[nc.name] = {{"median_rel_error", median(errors)}, {"repetitions", nc.seeds}};
      }
      summary["noise"] = cases;
      return 0;
    });
  }

  if (sc.outputs.contains(Output::InversionReport)) {
    stage("invert", [&] {
      for (std::size_t s = 0; s < n_sets; ++s) {
        const std::string& set = sc.observable_sets[s].name;
        if (!verdicts[s].invertible) {
          summary["sets"][set]["inversion"] = "skipped: not invertible";
          continue;
        }
        auto [rep, outside, full] = invert_and_score(s, sims[s].record);
        out.write("report_" + set + ".csv", io::report_csv(rep));
        nlohmann::json w = io::windows_json(rep, sc.inversion.singular_threshold);
        out.write_json("windows_" + set + ".json", w);
        summary["sets"][set]["windows"] = w["windows"];
        summary["sets"][set]["rel_error_outside_windows"] = error_json(outside, names);
        summary["sets"][set]["rel_error_full"] = error_json(full, names);
      }
      return 0;
    });
  }

  if (sc.outputs.contains(Output::RamseyBranches)) {
    stage("ramsey", [&] {
      // The direct scheme reads a Ramsey experiment, which starts from |+>.
      ProbeModel ramsey = models[0];
      ramsey.initial_state = DensityState::from_ket(qubit_ket(0.5, 0.0));
      std::vector<SignalSpec> mirror;
      for (const auto& s : sc.truth) mirror.push_back(negated(s));
      const MeasurementRecord y = simulate(ramsey, sc.truth, sc.horizon, sc.integrator).record;
      const MeasurementRecord y_mirror = simulate(ramsey, mirror, sc.horizon, sc.integrator).record;
      const RamseyBranches br = ramsey_direct(y);
      const SignalTrace truth = sample_signals(sc.truth, y);
      std::ostringstream csv;
      csv << "t,y,y_mirror,u_minus_branch,u_plus_branch,u_true,branch_point\n";
      for (Eigen::Index k = 0; k < y.samples(); ++k) {
        csv << io::format_number(y.time(k)) << ',' << io::format_number(y.values(k, 0)) << ','
            << io::format_number(y_mirror.values(k, 0)) << ',' << io::format_number(br.minus_branch.values(k, 0)) << ','
            << io::format_number(br.plus_branch.values(k, 0)) << ',' << io::format_number(truth.values(k, 0)) << ','
            << (br.branch_point[static_cast<std::size_t>(k)] ? 1 : 0) << '\n';
      }
      out.write("ramsey_branches.csv", csv.str());
      const std::vector<bool> all(static_cast<std::size_t>(y.samples()), true);
      summary["ramsey"] = {
          {"max_record_difference", (y.values - y_mirror.values).cwiseAbs().maxCoeff()},
          {"max_branch_separation", (br.minus_branch.values - br.plus_branch.values).cwiseAbs().maxCoeff()},
          {"minus_branch_rel_error", relative_l2_error(br.minus_branch, sc.truth, all).back()},
          {"plus_branch_rel_error", relative_l2_error(br.plus_branch, sc.truth, all).back()}};
      return 0;
    });
  }

  if (sc.outputs.contains(Output::LsqResult)) {
    stage("baseline", [&] {
      const MeasurementRecord& record = sims[0].record;
      const double energy = record_energy(record);
      nlohmann::json runs = nlohmann::json::object();
      for (const auto& guess : sc.lsq_guesses) {
        LsqConfig cfg = *sc.lsq;
        cfg.initial_guess = guess.initial_guess;
        cfg.execution = options.execution;
        const LsqResult r = lsq_identify(models[0], record, cfg);
        out.write("lsq_" + guess.name + "_cost.csv", io::cost_history_csv(r.cost_history));
        const std::vector<SignalSpec> found(r.signals.begin(), r.signals.end());
        out.write("lsq_" + guess.name + "_signals.csv", io::series_csv(sample_signals(found, record), names));
        const SignalTrace sampled = sample_signals(found, record);
        runs[guess.name] = {
            {"terminal_cost", r.terminal_cost},
            {"terminal_cost_over_energy", r.terminal_cost / energy},
            {"iterations", r.iterations},
            {"stop_reason", r.stop_reason},
            {"rel_signal_error",
             error_json(relative_l2_error(sampled, sc.truth, std::vector<bool>(static_cast<std::size_t>(record.samples()), true)),
                        names)}};
      }
      summary["lsq"] = {{"record_energy", energy}, {"runs", runs}};
      return 0;
    });
  }

  stage("manifest", [&] {
    out.write_json("summary.json", summary);
    nlohmann::json files = nlohmann::json::array();
    for (const auto& [file, hash] : out.hashes()) files.push_back({{"file", file}, {"sha256", hash}});
    const nlohmann::json manifest{{"scenario", sc.name},
                                  {"source", std::filesystem::path(sc.source).filename().string()},
                                  {"config_sha256", io::sha256_hex(sc.text)},
                                  {"seed", seed},
                                  {"artifacts", files}};
    io::write_file(result.directory / "manifest.json", manifest.dump(2) + "\n");
    for (const auto& [file, hash] : out.hashes()) result.artifacts.push_back(file);
    return 0;
  });
  return result;
}

}  // namespace insitu
