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

#include "insitu/signal_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace insitu {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double interpolate_uniform(double t0, double dt, const auto& values, std::size_t n, double t) {
  if (n == 0) return 0.0;
  const double s = (t - t0) / dt;
  if (s <= 0.0) return values[0];
  if (s >= static_cast<double>(n - 1)) return values[n - 1];
  const auto k = static_cast<std::size_t>(std::floor(s));
  const double frac = s - static_cast<double>(k);
  if (frac == 0.0) return values[k];
  return (1.0 - frac) * values[k] + frac * values[k + 1];
}

}  // namespace

double TimeSeries::interpolate(Eigen::Index channel, double t) const {
  const auto col = values.col(channel);
  return interpolate_uniform(t0, dt, col, static_cast<std::size_t>(col.size()), t);
}

void TimeSeries::check() const {
  if (!(dt > 0.0)) throw std::invalid_argument("time series: dt must be positive");
  if (values.rows() == 0 || values.cols() == 0) {
    throw std::invalid_argument("time series: empty");
  }
}

Eigen::Index MeasurementRecord::out_of_range_count(double allowance) const {
  return (values.array().abs() > 1.0 + allowance).count();
}

double Multisine::operator()(double t) const {
  double sum = 0.0;
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    sum += amplitudes[k] * std::sin(frequencies[k] * t + phases[k]);
  }
  return sum;
}

double Multisine::variance() const {
  double v = 0.0;
  for (double a : amplitudes) v += 0.5 * a * a;
  return v;
}

double SignalSpec::operator()(double t) const {
  double base = std::visit(
      overloaded{
          [](const ConstantSignal& c) { return c.value; },
          [t](const Sinusoid& s) { return s.amplitude * std::sin(s.frequency * t + s.phase); },
          [t](const DistortedStep& d) {
            if (t < d.step_time) return 0.0;
            return d.amplitude * (1.0 - std::exp(-(t - d.step_time) / d.tau));
          },
          [t](const SampledSignal& s) {
            return interpolate_uniform(s.t0, s.dt, s.values, s.values.size(), t);
          },
          [t](const PiecewiseConstant& p) {
            if (p.values.empty()) return 0.0;
            const double s = (t - p.t0) / p.width;
            const auto last = static_cast<double>(p.values.size() - 1);
            const double idx = std::clamp(std::floor(s), 0.0, last);
            return p.values[static_cast<std::size_t>(idx)];
          },
          [t](const Multisine& m) { return m(t); },
      },
      shape_);
  for (const auto& p : perturbations_) base += p(t);
  return base;
}

SignalSpec SignalSpec::with_perturbation(Multisine noise) const {
  SignalSpec out = *this;
  out.perturbations_.push_back(std::move(noise));
  return out;
}

bool SignalSpec::is_constant() const {
  return std::holds_alternative<ConstantSignal>(shape_) && perturbations_.empty();
}

SignalSpec constant_mhz(double f_mhz) { return ConstantSignal{mhz_to_rad_per_ns(f_mhz)}; }

SignalSpec distorted_step_mhz(double amplitude_mhz, double step_time_ns, double tau_ns) {
  return DistortedStep{mhz_to_rad_per_ns(amplitude_mhz), step_time_ns, tau_ns};
}

bool ProbeModel::has_lindblad() const {
  auto is_l = [](const GeneratorTerm& g) { return g.kind == GeneratorTerm::Kind::Lindblad; };
  return std::any_of(drift.begin(), drift.end(), is_l) ||
         std::any_of(controls.begin(), controls.end(), is_l);
}

void ProbeModel::validate() const {
  const Eigen::Index d = dim();
  if (controls.empty()) throw std::invalid_argument("probe model: at least one control required");
  if (observables.empty()) {
    throw std::invalid_argument("probe model: at least one observable required");
  }
  auto check_term = [&](const GeneratorTerm& g, const char* where) {
    if (g.op.rows() != d || g.op.cols() != d) {
      throw DimensionError(std::string("probe model: ") + where + " term dimension mismatch");
    }
    if (g.kind == GeneratorTerm::Kind::Hamiltonian && !is_hermitian(g.op, hermitian_tolerance)) {
      throw std::invalid_argument(std::string("probe model: ") + where +
                                  " Hamiltonian term is not Hermitian");
    }
  };
  for (const auto& g : drift) check_term(g, "drift");
  for (const auto& g : controls) check_term(g, "control");
  for (std::size_t k = 0; k < observables.size(); ++k) {
    const auto& o = observables[k];
    if (o.rows() != d || o.cols() != d) {
      throw DimensionError("probe model: observable dimension mismatch");
    }
    if (!is_hermitian(o, hermitian_tolerance)) {
      std::ostringstream msg;
      msg << "probe model: observable " << k << " is not Hermitian";
      throw std::invalid_argument(msg.str());
    }
  }
  if (!control_names.empty() && control_names.size() != controls.size()) {
    throw std::invalid_argument("probe model: control_names length mismatch");
  }
  if (!observable_names.empty() && observable_names.size() != observables.size()) {
    throw std::invalid_argument("probe model: observable_names length mismatch");
  }
}

Ket qubit_ket(double p0, double phase) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw std::invalid_argument("qubit_ket: p0 must be in [0, 1]");
  Ket k(2);
  k << std::sqrt(p0), std::sqrt(1.0 - p0) * std::polar(1.0, phase);
  return k;
}

Ket product_ket(std::span<const Ket> qubits) {
  if (qubits.empty()) throw std::invalid_argument("product_ket: no qubits");
  Ket psi = qubits[0];
  for (std::size_t q = 1; q < qubits.size(); ++q) {
    Ket next(psi.size() * qubits[q].size());
    for (Eigen::Index i = 0; i < psi.size(); ++i) {
      next.segment(i * qubits[q].size(), qubits[q].size()) = psi(i) * qubits[q];
    }
    psi = next;
  }
  return psi;
}

DensityState two_qubit_reference_state() {
  const std::vector<Ket> qubits{qubit_ket(2.0 / 3.0, 0.0), qubit_ket(0.75, 0.0)};
  return DensityState::from_ket(product_ket(qubits));
}

OperatorMatrix exchange_operator() {
  const OperatorMatrix sp = pauli(Pauli::Plus);
  const OperatorMatrix sm = pauli(Pauli::Minus);
  return tensor(sp, sm) + tensor(sm, sp);
}

ProbeModel build_two_qubit_model(const Coefficient& w1, const Coefficient& w2, const Coefficient& g,
                                 std::vector<OperatorMatrix> observables,
                                 std::vector<std::string> observable_names,
                                 std::optional<DensityState> initial_state) {
  if (!w1.unknown && !w2.unknown && !g.unknown) {
    throw std::invalid_argument("two-qubit model: all coefficients known, nothing to identify");
  }
  if (observables.empty()) throw std::invalid_argument("two-qubit model: no observables");
  for (const auto& o : observables) {
    if (o.rows() != 4 || o.cols() != 4) {
      throw DimensionError("two-qubit model: observables must be 4x4");
    }
  }

  const OperatorMatrix z = pauli(Pauli::Z);
  const OperatorMatrix h1 = 0.5 * embed(z, 0, 2);
  const OperatorMatrix h2 = 0.5 * embed(z, 1, 2);
  const OperatorMatrix hx = exchange_operator();

  ProbeModel model{.drift = {},
                   .controls = {},
                   .observables = std::move(observables),
                   .initial_state = initial_state ? *initial_state : two_qubit_reference_state(),
                   .control_names = {},
                   .observable_names = std::move(observable_names)};

  OperatorMatrix drift_h = OperatorMatrix::Zero(4, 4);
  auto place = [&](const Coefficient& c, const OperatorMatrix& h, const char* name) {
    if (c.unknown) {
      model.controls.push_back(GeneratorTerm::hamiltonian(h));
      model.control_names.emplace_back(name);
    } else {
      drift_h += c.value * h;
    }
  };
  place(w1, h1, "w1");
  place(w2, h2, "w2");
  place(g, hx, "g");
  if (drift_h.cwiseAbs().maxCoeff() > 0.0) {
    model.drift.push_back(GeneratorTerm::hamiltonian(drift_h));
  }
  model.validate();
  return model;
}

OperatorMatrix pauli_product(std::string_view name, int n_qubits) {
  OperatorMatrix out = OperatorMatrix::Identity(Eigen::Index{1} << n_qubits,
                                                Eigen::Index{1} << n_qubits);
  auto bad = [&]() {
    return std::invalid_argument("unknown observable name '" + std::string(name) + "'");
  };
  std::string_view rest = name;
  bool any = false;
  while (!rest.empty()) {
    const auto star = rest.find('*');
    const std::string_view factor = rest.substr(0, star);
    rest = star == std::string_view::npos ? std::string_view{} : rest.substr(star + 1);
    // factor: s<digit><axis>
    if (factor.size() != 3 || factor[0] != 's') throw bad();
    const int site = factor[1] - '1';
    if (site < 0 || site >= n_qubits) throw bad();
    Pauli p;
    switch (factor[2]) {
      case 'x': p = Pauli::X; break;
      case 'y': p = Pauli::Y; break;
      case 'z': p = Pauli::Z; break;
      default: throw bad();
    }
    out = out * embed(pauli(p), site, n_qubits);
    any = true;
  }
  if (!any) throw bad();
  return out;
}

}  // namespace insitu
