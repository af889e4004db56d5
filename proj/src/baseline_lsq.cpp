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

#include "insitu/baseline_lsq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace insitu {

namespace {

std::vector<SignalSpec> as_specs(const std::vector<PiecewiseConstant>& bins) {
  return {bins.begin(), bins.end()};
}

double evaluate(const ProbeModel& model, const MeasurementRecord& record, const Eigen::VectorXd& params,
                const IntegratorConfig& integrator) {
  const auto bins = unpack_bins(params, model.inputs(), record.t0, record.t_end());
  const auto specs = as_specs(bins);
  return lsq_cost(model, specs, record, integrator);
}

// Trial points that blow up the integrator count as infinitely bad.
double evaluate_trial(const ProbeModel& model, const MeasurementRecord& record, const Eigen::VectorXd& params,
                      const IntegratorConfig& integrator) {
  try {
    return evaluate(model, record, params, integrator);
  } catch (const StateInvariantError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

void LsqConfig::check() const {
  if (n_bins < 1) throw std::invalid_argument("lsq: n_bins must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("lsq: max_iters must be >= 1");
  if (!(step > 0.0)) throw std::invalid_argument("lsq: step must be positive");
  if (!(tol >= 0.0)) throw std::invalid_argument("lsq: tol must be >= 0");
  if (!(fd_relative > 0.0)) throw std::invalid_argument("lsq: fd_relative must be positive");
  integrator.check();
}

double record_energy(const MeasurementRecord& record) {
  record.check();
  const Eigen::VectorXd sq = record.values.rowwise().squaredNorm();
  const Eigen::Index n = sq.size();
  if (n < 2) return 0.0;
  return record.dt * (sq.sum() - 0.5 * (sq(0) + sq(n - 1)));
}

double lsq_cost(const ProbeModel& model, std::span<const SignalSpec> candidate,
                const MeasurementRecord& record, const IntegratorConfig& integrator) {
  record.check();
  if (std::abs(integrator.sample_dt() - record.dt) > 1e-9 * record.dt) {
    std::ostringstream msg;
    msg << "lsq_cost: integrator samples every " << integrator.sample_dt() << " ns, record every "
        << record.dt << " ns";
    throw std::invalid_argument(msg.str());
  }
  if (record.t0 != 0.0) throw std::invalid_argument("lsq_cost: record must start at t = 0");
  const SimulationResult sim = simulate(model, candidate, record.t_end(), integrator);
  if (sim.record.samples() != record.samples() || sim.record.channels() != record.channels()) {
    throw DimensionError("lsq_cost: simulated record does not match the measured record");
  }
  MeasurementRecord diff = record;
  diff.values -= sim.record.values;
  return record_energy(diff);
}

std::vector<PiecewiseConstant> unpack_bins(const Eigen::VectorXd& params, std::size_t signals,
                                           double t0, double t_end) {
  if (signals == 0 || params.size() % static_cast<Eigen::Index>(signals) != 0) {
    throw DimensionError("unpack_bins: parameter count is not a multiple of the signal count");
  }
  const Eigen::Index per = params.size() / static_cast<Eigen::Index>(signals);
  const double width = (t_end - t0) / static_cast<double>(per);
  std::vector<PiecewiseConstant> out;
  for (std::size_t s = 0; s < signals; ++s) {
    const auto seg = params.segment(static_cast<Eigen::Index>(s) * per, per);
    out.push_back(PiecewiseConstant{t0, width, {seg.data(), seg.data() + per}});
  }
  return out;
}

Eigen::VectorXd lsq_gradient(const ProbeModel& model, const MeasurementRecord& record,
                             const Eigen::VectorXd& params, double perturbation,
                             const IntegratorConfig& integrator, Execution execution,
                             double base_cost) {
  Eigen::VectorXd grad(params.size());
  for_each_index(static_cast<std::size_t>(params.size()), execution, [&](std::size_t i) {
    Eigen::VectorXd shifted = params;
    shifted(static_cast<Eigen::Index>(i)) += perturbation;
    grad(static_cast<Eigen::Index>(i)) = (evaluate(model, record, shifted, integrator) - base_cost) / perturbation;
  });
  return grad;
}

LsqResult lsq_identify(const ProbeModel& model, const MeasurementRecord& record, const LsqConfig& cfg) {
  cfg.check();
  model.validate();
  record.check();
  const std::size_t m = model.inputs();
  if (cfg.initial_guess.size() != m) {
    std::ostringstream msg;
    msg << "lsq: " << cfg.initial_guess.size() << " initial guesses for " << m << " unknown signals";
    throw std::invalid_argument(msg.str());
  }

  const double t0 = record.t0;
  const double width = (record.t_end() - t0) / cfg.n_bins;
  Eigen::VectorXd x(static_cast<Eigen::Index>(m) * cfg.n_bins);
  for (std::size_t s = 0; s < m; ++s) {
    for (int b = 0; b < cfg.n_bins; ++b) {
      x(static_cast<Eigen::Index>(s) * cfg.n_bins + b) = cfg.initial_guess[s](t0 + (b + 0.5) * width);
    }
  }
  const double scale = std::max(x.cwiseAbs().maxCoeff(), 1e-12);
  const double h = cfg.fd_relative * scale;

  LsqResult out;
  double cost = evaluate(model, record, x, cfg.integrator);
  out.cost_history.push_back(cost);
  Eigen::VectorXd best_x = x;
  double best_cost = cost;
  double step = cfg.step;
  out.stop_reason = "max_iters";

  Eigen::VectorXd prev_x;
  Eigen::VectorXd prev_g;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Eigen::VectorXd g = lsq_gradient(model, record, x, h, cfg.integrator, cfg.execution, cost);
    if (cfg.step_rule == LsqConfig::StepRule::Backtracking && prev_g.size() == g.size()) {
      // Barzilai-Borwein trial step from the last secant pair.
      const Eigen::VectorXd s = x - prev_x;
      const double sy = s.dot(g - prev_g);
      if (sy > 0.0) step = s.squaredNorm() / sy;
    }
    prev_x = x;
    prev_g = g;
    // No bin moves by more than the signal scale in one trial step.
    const double gmax = g.cwiseAbs().maxCoeff();
    if (gmax > 0.0) step = std::min(step, scale / gmax);
    const double gg = g.squaredNorm();
    if (!(gg > 0.0)) {
      out.stop_reason = "zero_gradient";
      break;
    }
    Eigen::VectorXd next;
    double next_cost = 0.0;
    if (cfg.step_rule == LsqConfig::StepRule::FixedStep) {
      next = x - cfg.step * g;
      next_cost = evaluate_trial(model, record, next, cfg.integrator);
    } else {
      // Armijo backtracking from the trial step.
      bool accepted = false;
      for (int k = 0; k < 60; ++k) {
        next = x - step * g;
        next_cost = evaluate_trial(model, record, next, cfg.integrator);
        if (next_cost <= cost - 1e-4 * step * gg) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        out.stop_reason = "line_search_failed";
        break;
      }
    }
    const double decrease = cost - next_cost;
    ++out.iterations;
    x = next;
    cost = next_cost;
    out.cost_history.push_back(cost);
    if (cost < best_cost) {
      best_cost = cost;
      best_x = x;
    }
    if (cfg.step_rule == LsqConfig::StepRule::Backtracking) step *= 2.0;  // used when the secant test fails
    if (decrease < cfg.tol) {
      out.stop_reason = "tolerance";
      break;
    }
  }
  // Fixed steps may overshoot; the best iterate is reported.
  out.terminal_cost = best_cost;
  out.signals = unpack_bins(best_x, m, t0, record.t_end());
  return out;
}

}  // namespace insitu
