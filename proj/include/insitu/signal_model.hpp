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

#pragma once

#include <concepts>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "insitu/operator_core.hpp"

namespace insitu {

// Physical units: time in ns, frequencies and Hamiltonian coefficients in rad/ns.
// Frequencies quoted in MHz are ordinary frequencies: omega = 2*pi*f*1e-3 rad/ns.
constexpr double mhz_to_rad_per_ns(double f_mhz) { return 2.0 * std::numbers::pi * f_mhz * 1e-3; }
constexpr double rad_per_ns_to_mhz(double w) { return w / (2.0 * std::numbers::pi * 1e-3); }

/// Uniformly sampled multichannel series; rows are samples, columns channels.
struct TimeSeries {
  double t0 = 0.0;
  double dt = 1.0;
  Eigen::MatrixXd values;

  Eigen::Index samples() const { return values.rows(); }
  Eigen::Index channels() const { return values.cols(); }
  double time(Eigen::Index k) const { return t0 + static_cast<double>(k) * dt; }
  double t_end() const { return time(samples() - 1); }

  /// Linear interpolation of one channel, constant beyond the ends.
  double interpolate(Eigen::Index channel, double t) const;
  /// Throws if dt <= 0 or the series is empty.
  void check() const;
};

/// Sampled input signals u(t) (rad/ns).
struct SignalTrace : TimeSeries {};

/// Sampled expectation values y(t) (dimensionless).
struct MeasurementRecord : TimeSeries {
  /// Number of entries outside [-1 - allowance, 1 + allowance].
  Eigen::Index out_of_range_count(double allowance = 1e-6) const;
};

struct ConstantSignal {
  double value = 0.0;
};

/// amplitude * sin(frequency * t + phase)
struct Sinusoid {
  double amplitude = 1.0;
  double frequency = 1.0;
  double phase = 0.0;
};

/// Single-pole rise: amplitude * (1 - exp(-(t - step_time) / tau)) for t >= step_time, 0 before.
struct DistortedStep {
  double amplitude = 1.0;
  double step_time = 0.0;
  double tau = 20.0;
};

/// Linearly interpolated samples, held constant outside the sampled range.
struct SampledSignal {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<double> values;
};

/// `values.size()` bins of equal width starting at t0; held constant outside.
struct PiecewiseConstant {
  double t0 = 0.0;
  double width = 1.0;
  std::vector<double> values;
};

/// Sum of sinusoids, used for synthesized noise.
struct Multisine {
  std::vector<double> amplitudes;
  std::vector<double> frequencies;
  std::vector<double> phases;

  double operator()(double t) const;
  double variance() const;
};

/// A scalar signal: one base shape plus optional additive perturbations.
class SignalSpec {
 public:
  using Shape = std::variant<ConstantSignal, Sinusoid, DistortedStep, SampledSignal,
                             PiecewiseConstant, Multisine>;

  SignalSpec() = default;
  template <class S>
    requires std::constructible_from<Shape, S>
  SignalSpec(S shape) : shape_(std::move(shape)) {}  // NOLINT(google-explicit-constructor)

  double operator()(double t) const;
  const Shape& shape() const { return shape_; }
  const std::vector<Multisine>& perturbations() const { return perturbations_; }

  /// Copy of this signal with `noise` added.
  SignalSpec with_perturbation(Multisine noise) const;

  bool is_constant() const;

 private:
  Shape shape_ = ConstantSignal{};
  std::vector<Multisine> perturbations_;
};

inline double eval_signal(const SignalSpec& spec, double t) { return spec(t); }

SignalSpec constant_mhz(double f_mhz);
SignalSpec distorted_step_mhz(double amplitude_mhz, double step_time_ns, double tau_ns);

/// Closed or Markovian open probe: rho' = [L0 + sum_j u_j(t) L_j] rho, y_l = Tr[rho O_l].
struct ProbeModel {
  std::vector<GeneratorTerm> drift;
  std::vector<GeneratorTerm> controls;
  std::vector<OperatorMatrix> observables;
  DensityState initial_state;

  std::vector<std::string> control_names;
  std::vector<std::string> observable_names;
  double hermitian_tolerance = kHermitianTolerance;

  Eigen::Index dim() const { return initial_state.dim(); }
  std::size_t inputs() const { return controls.size(); }
  std::size_t outputs() const { return observables.size(); }

  bool has_lindblad() const;
  /// Throws std::invalid_argument / DimensionError on any broken invariant.
  void validate() const;
};

/// A coefficient of the two-qubit Hamiltonian: known constant or an unknown input.
struct Coefficient {
  bool unknown = false;
  double value = 0.0;  // rad/ns, used when known

  static Coefficient known(double w) { return {false, w}; }
  static Coefficient identify() { return {true, 0.0}; }
};

/// sqrt(p0)|0> + sqrt(1 - p0) e^{i phase}|1>.
Ket qubit_ket(double p0, double phase);
/// Kronecker product of single-qubit kets, qubit 1 leftmost.
Ket product_ket(std::span<const Ket> qubits);

/// (sqrt(2/3)|0> + sqrt(1/3)|1>) (x) (sqrt(3)/2 |0> + 1/2 |1>)
DensityState two_qubit_reference_state();

OperatorMatrix exchange_operator();

/// H = w1/2 s1z + w2/2 s2z + g (s1+ s2- + s1- s2+). Unknown coefficients become
/// controls in the order (w1, w2, g); known ones are folded into the drift.
ProbeModel build_two_qubit_model(const Coefficient& w1, const Coefficient& w2, const Coefficient& g,
                                 std::vector<OperatorMatrix> observables,
                                 std::vector<std::string> observable_names = {},
                                 std::optional<DensityState> initial_state = std::nullopt);

/// Parses Pauli-product names such as "s1x", "s2y", "s1z*s2z" (qubit index 1-based).
OperatorMatrix pauli_product(std::string_view name, int n_qubits);

}  // namespace insitu
