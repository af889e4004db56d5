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

#include <cstdint>
#include <span>
#include <vector>

#include "insitu/signal_model.hpp"

namespace insitu {

struct IntegratorConfig {
  enum class Method { RK4 };

  double dt = 0.1;       // ns
  int sample_every = 5;  // record decimation
  Method method = Method::RK4;

  void check() const;
  double sample_dt() const { return dt * sample_every; }
};

/// Right-hand side of rho' = [L0 + sum_j u_j L_j] rho with the Hamiltonian parts
/// pre-summed so each evaluation costs one commutator plus the dissipators.
class MasterEquation {
 public:
  explicit MasterEquation(const ProbeModel& model);

  OperatorMatrix rhs(const OperatorMatrix& rho, std::span<const double> u) const;
  std::size_t inputs() const { return controls_.size(); }

 private:
  OperatorMatrix drift_h_;
  std::vector<OperatorMatrix> drift_collapse_;
  std::vector<GeneratorTerm> controls_;
};

/// One classical RK4 step for rho' = eq.rhs(rho, u(t)); `input_at(t, out)` fills u.
template <class InputFn>
OperatorMatrix rk4_step(const MasterEquation& eq, const OperatorMatrix& rho, double t, double h,
                        InputFn&& input_at) {
  std::vector<double> u(eq.inputs());
  input_at(t, u);
  const OperatorMatrix k1 = eq.rhs(rho, u);
  input_at(t + 0.5 * h, u);
  const OperatorMatrix k2 = eq.rhs(rho + (0.5 * h) * k1, u);
  const OperatorMatrix k3 = eq.rhs(rho + (0.5 * h) * k2, u);
  input_at(t + h, u);
  const OperatorMatrix k4 = eq.rhs(rho + h * k3, u);
  return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

struct SimulationResult {
  std::vector<OperatorMatrix> trajectory;  // density matrices at record sample times
  MeasurementRecord record;
  double max_trace_drift = 0.0;
};

/// Fixed-step RK4 of the controlled master equation. Throws StateInvariantError if
/// |Tr rho - 1| exceeds 1e-6 at any step.
SimulationResult simulate(const ProbeModel& model, std::span<const SignalSpec> inputs, double horizon,
                          const IntegratorConfig& cfg);

struct WavefunctionSeries {
  double t0 = 0.0;
  double dt = 1.0;
  std::vector<Ket> states;
  MeasurementRecord record;
  double max_norm_drift = 0.0;  // largest per-step |‖psi‖ - 1| before renormalization
};

/// Schrodinger-equation RK4 for models without dissipators; renormalizes every step.
WavefunctionSeries closed_state_simulate(const ProbeModel& model, const Ket& psi0,
                                         std::span<const SignalSpec> inputs, double horizon,
                                         const IntegratorConfig& cfg);

struct NoiseSpec {
  enum class Target { Evolution, Measurement };
  enum class Band { Low, High };

  Target target = Target::Measurement;
  Band band = Band::High;
  double variance = 0.0;
  std::uint64_t seed = 0;
  double reference_frequency = 1.0;  // rad/ns, fundamental of the signal being identified
  std::size_t channel = 0;           // control channel for Evolution noise

  void check() const;
};

inline constexpr int kNoiseComponents = 16;

/// Frequency band in rad/ns: Low = [0.5, 2] x reference, High = [25, 30] x reference.
std::pair<double, double> noise_band(const NoiseSpec& spec);

/// Random-phase multisine with `kNoiseComponents` equal-amplitude tones whose
/// total variance equals spec.variance. `stream` decorrelates channels.
Multisine synthesize_noise(const NoiseSpec& spec, std::uint64_t stream = 0);

/// Measurement target: adds an independent noise trace to every channel.
MeasurementRecord inject_noise(const MeasurementRecord& record, const NoiseSpec& spec);

/// Evolution target: adds noise to the designated control channel.
std::vector<SignalSpec> inject_noise(std::span<const SignalSpec> inputs, const NoiseSpec& spec);

}  // namespace insitu
