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

#include "insitu/forward_sim.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace insitu {

namespace {

const Complex kI{0.0, 1.0};

std::int64_t step_count(double horizon, double dt) {
  if (!(horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be positive");
  const double steps = horizon / dt;
  const auto n = static_cast<std::int64_t>(std::llround(steps));
  if (n < 1 || std::abs(steps - static_cast<double>(n)) > 1e-6 * std::max(1.0, steps)) {
    std::ostringstream msg;
    msg << "simulate: horizon " << horizon << " is not a multiple of dt " << dt;
    throw std::invalid_argument(msg.str());
  }
  return n;
}

void check_inputs(const ProbeModel& model, std::span<const SignalSpec> inputs) {
  if (inputs.size() != model.inputs()) {
    std::ostringstream msg;
    msg << "simulate: " << inputs.size() << " input signals for " << model.inputs() << " controls";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

void IntegratorConfig::check() const {
  if (!(dt > 0.0)) throw std::invalid_argument("integrator: dt must be positive");
  if (sample_every < 1) throw std::invalid_argument("integrator: sample_every must be >= 1");
}

MasterEquation::MasterEquation(const ProbeModel& model) {
  const Eigen::Index d = model.dim();
  drift_h_ = OperatorMatrix::Zero(d, d);
  for (const auto& term : model.drift) {
    if (term.kind == GeneratorTerm::Kind::Hamiltonian) {
      drift_h_ += term.op;
    } else {
      drift_collapse_.push_back(term.op);
    }
  }
  controls_ = model.controls;
}

OperatorMatrix MasterEquation::rhs(const OperatorMatrix& rho, std::span<const double> u) const {
  OperatorMatrix h = drift_h_;
  OperatorMatrix out = OperatorMatrix::Zero(rho.rows(), rho.cols());
  for (std::size_t j = 0; j < controls_.size(); ++j) {
    if (controls_[j].kind == GeneratorTerm::Kind::Hamiltonian) {
      h += u[j] * controls_[j].op;
    } else if (u[j] != 0.0) {
      out += u[j] * apply_forward(controls_[j], rho);
    }
  }
  const OperatorMatrix hr = h * rho;
  out += -kI * (hr - hr.adjoint());  // rho and h Hermitian: rho h = (h rho)^dag
  for (const auto& c : drift_collapse_) {
    const OperatorMatrix cd = c.adjoint();
    const OperatorMatrix cdc = cd * c;
    out += 2.0 * c * rho * cd - cdc * rho - rho * cdc;
  }
  return out;
}

SimulationResult simulate(const ProbeModel& model, std::span<const SignalSpec> inputs, double horizon,
                          const IntegratorConfig& cfg) {
  cfg.check();
  model.validate();
  check_inputs(model, inputs);
  const std::int64_t n_steps = step_count(horizon, cfg.dt);
  const MasterEquation eq(model);

  auto input_at = [&](double t, std::vector<double>& u) {
    for (std::size_t j = 0; j < inputs.size(); ++j) u[j] = inputs[j](t);
  };

  const std::int64_t n_samples = n_steps / cfg.sample_every + 1;
  SimulationResult out;
  out.record.t0 = 0.0;
  out.record.dt = cfg.sample_dt();
  out.record.values.resize(n_samples, static_cast<Eigen::Index>(model.outputs()));
  out.trajectory.reserve(static_cast<std::size_t>(n_samples));

  OperatorMatrix rho = model.initial_state.matrix();
  auto emit = [&](std::int64_t sample) {
    for (std::size_t l = 0; l < model.outputs(); ++l) {
      out.record.values(sample, static_cast<Eigen::Index>(l)) = expectation(rho, model.observables[l]);
    }
    out.trajectory.push_back(rho);
  };
  emit(0);
  for (std::int64_t step = 0; step < n_steps; ++step) {
    const double t = static_cast<double>(step) * cfg.dt;
    rho = rk4_step(eq, rho, t, cfg.dt, input_at);
    const double drift = std::abs(rho.trace() - 1.0);
    out.max_trace_drift = std::max(out.max_trace_drift, drift);
    if (!(drift <= 1e-6)) {
      std::ostringstream msg;
      msg << "simulate: trace drift " << drift << " at t=" << t + cfg.dt << " ns";
      throw StateInvariantError(msg.str());
    }
    if ((step + 1) % cfg.sample_every == 0) emit((step + 1) / cfg.sample_every);
  }
  return out;
}

WavefunctionSeries closed_state_simulate(const ProbeModel& model, const Ket& psi0,
                                         std::span<const SignalSpec> inputs, double horizon,
                                         const IntegratorConfig& cfg) {
  cfg.check();
  if (model.has_lindblad()) {
    throw std::invalid_argument("closed_state_simulate: model has Lindblad terms");
  }
  check_inputs(model, inputs);
  if (psi0.size() != model.dim()) throw DimensionError("closed_state_simulate: ket dimension");
  const std::int64_t n_steps = step_count(horizon, cfg.dt);

  OperatorMatrix drift_h = OperatorMatrix::Zero(model.dim(), model.dim());
  for (const auto& term : model.drift) drift_h += term.op;
  auto hamiltonian = [&](double t) {
    OperatorMatrix h = drift_h;
    for (std::size_t j = 0; j < inputs.size(); ++j) h += inputs[j](t) * model.controls[j].op;
    return h;
  };

  const std::int64_t n_samples = n_steps / cfg.sample_every + 1;
  WavefunctionSeries out;
  out.dt = cfg.sample_dt();
  out.record.dt = cfg.sample_dt();
  out.record.values.resize(n_samples, static_cast<Eigen::Index>(model.outputs()));
  out.states.reserve(static_cast<std::size_t>(n_samples));

  Ket psi = psi0 / psi0.norm();
  auto emit = [&](std::int64_t sample) {
    for (std::size_t l = 0; l < model.outputs(); ++l) {
      const Complex v = psi.dot(model.observables[l] * psi);
      out.record.values(sample, static_cast<Eigen::Index>(l)) = v.real();
    }
    out.states.push_back(psi);
  };
  emit(0);
  const double h = cfg.dt;
  for (std::int64_t step = 0; step < n_steps; ++step) {
    const double t = static_cast<double>(step) * h;
    const OperatorMatrix h0 = hamiltonian(t);
    const OperatorMatrix hm = hamiltonian(t + 0.5 * h);
    const OperatorMatrix h1 = hamiltonian(t + h);
    const Ket k1 = -kI * (h0 * psi);
    const Ket k2 = -kI * (hm * (psi + 0.5 * h * k1));
    const Ket k3 = -kI * (hm * (psi + 0.5 * h * k2));
    const Ket k4 = -kI * (h1 * (psi + h * k3));
    psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double norm = psi.norm();
    out.max_norm_drift = std::max(out.max_norm_drift, std::abs(norm - 1.0));
    psi /= norm;
    if ((step + 1) % cfg.sample_every == 0) emit((step + 1) / cfg.sample_every);
  }
  return out;
}

void NoiseSpec::check() const {
  if (!(variance >= 0.0)) throw std::invalid_argument("noise: variance must be >= 0");
  if (!(reference_frequency > 0.0)) {
    throw std::invalid_argument("noise: reference frequency must be positive");
  }
}

std::pair<double, double> noise_band(const NoiseSpec& spec) {
  if (spec.band == NoiseSpec::Band::Low) {
    return {0.5 * spec.reference_frequency, 2.0 * spec.reference_frequency};
  }
  return {25.0 * spec.reference_frequency, 30.0 * spec.reference_frequency};
}

Multisine synthesize_noise(const NoiseSpec& spec, std::uint64_t stream) {
  spec.check();
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  const auto [lo, hi] = noise_band(spec);
  std::uniform_real_distribution<double> freq(lo, hi);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

  // Each tone of amplitude a contributes a^2 / 2 to the variance.
  const double amplitude = std::sqrt(2.0 * spec.variance / kNoiseComponents);
  Multisine m;
  for (int k = 0; k < kNoiseComponents; ++k) {
    m.amplitudes.push_back(amplitude);
    m.frequencies.push_back(freq(rng));
    m.phases.push_back(phase(rng));
  }
  return m;
}

MeasurementRecord inject_noise(const MeasurementRecord& record, const NoiseSpec& spec) {
  spec.check();
  if (spec.target != NoiseSpec::Target::Measurement) {
    throw std::invalid_argument("inject_noise: record target requires Measurement noise");
  }
  MeasurementRecord out = record;
  if (spec.variance == 0.0) return out;
  for (Eigen::Index l = 0; l < out.channels(); ++l) {
    const Multisine noise = synthesize_noise(spec, static_cast<std::uint64_t>(l));
    for (Eigen::Index k = 0; k < out.samples(); ++k) out.values(k, l) += noise(out.time(k));
  }
  return out;
}

std::vector<SignalSpec> inject_noise(std::span<const SignalSpec> inputs, const NoiseSpec& spec) {
  spec.check();
  if (spec.target != NoiseSpec::Target::Evolution) {
    throw std::invalid_argument("inject_noise: input target requires Evolution noise");
  }
  if (spec.channel >= inputs.size()) throw std::out_of_range("inject_noise: channel out of range");
  std::vector<SignalSpec> out(inputs.begin(), inputs.end());
  if (spec.variance == 0.0) return out;
  out[spec.channel] = out[spec.channel].with_perturbation(synthesize_noise(spec, spec.channel));
  return out;
}

}  // namespace insitu
