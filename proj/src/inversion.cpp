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

#include "insitu/inversion.hpp"

#include <cmath>
#include <sstream>

namespace insitu {

Readout readout_inputs(const Eigen::MatrixXd& coupling, const Eigen::VectorXd& rhs,
                       double pinv_cutoff) {
  if (coupling.rows() != rhs.size()) throw DimensionError("readout_inputs: rhs length mismatch");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(coupling, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) < 1e-14) {
    throw SingularReadoutError("readout_inputs: all singular values below 1e-14");
  }
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) >= pinv_cutoff * s(0) && s(k) >= 1e-14) inv(k) = 1.0 / s(k);
  }
  Readout out;
  out.u = svd.matrixV() * inv.asDiagonal() * (svd.matrixU().transpose() * rhs);
  out.singular_values = s;
  if (out.singular_values.size() < coupling.cols()) {
    // Fewer rows than inputs: the missing singular values are zero.
    Eigen::VectorXd padded = Eigen::VectorXd::Zero(coupling.cols());
    padded.head(s.size()) = s;
    out.singular_values = padded;
  }
  return out;
}

InverseSystem::InverseSystem(const ProbeModel& model, const InvertibilityVerdict& verdict)
    : inputs_(model.inputs()), outputs_(model.outputs()) {
  if (!verdict.invertible) throw std::invalid_argument("inverse system: model is not invertible");
  double ref = 0.0;
  for (const auto& t : verdict.transformed) {
    if (t.coefficients.rows() != static_cast<Eigen::Index>(outputs_)) {
      throw DimensionError("inverse system: verdict does not match the model's observables");
    }
    Row row;
    row.control = control_array(model.controls, t.op);
    row.drift = apply_adjoint_sum(model.drift, t.op);
    row.coefficients = t.coefficients;
    row.op = t.op;
    for (const auto& c : row.control) {
      const double nrm = operator_norm(c);
      ref += nrm * nrm;
    }
    max_order_ = std::max(max_order_, t.order);
    rows_.push_back(std::move(row));
  }
  reference_scale_ = std::sqrt(ref);
}

Eigen::MatrixXd InverseSystem::coupling(const OperatorMatrix& rho) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(inputs_));
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    for (std::size_t j = 0; j < inputs_; ++j) {
      m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = expectation(rho, rows_[k].control[j]);
    }
  }
  return m;
}

Eigen::VectorXd InverseSystem::drift_terms(const OperatorMatrix& rho) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t k = 0; k < rows_.size(); ++k) v(static_cast<Eigen::Index>(k)) = expectation(rho, rows_[k].drift);
  return v;
}

Eigen::VectorXd InverseSystem::measured_terms(std::span<const Eigen::VectorXd> derivs) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    const Eigen::MatrixXd& c = rows_[k].coefficients;
    for (Eigen::Index d = 0; d < c.cols(); ++d) {
      f(static_cast<Eigen::Index>(k)) += c.col(d).dot(derivs[static_cast<std::size_t>(d + 1)]);
    }
  }
  return f;
}

Eigen::VectorXd InverseSystem::measured_terms(const DerivativeTraces& traces, double t) const {
  std::vector<Eigen::VectorXd> derivs;
  derivs.reserve(static_cast<std::size_t>(max_order_) + 1);
  for (int d = 0; d <= max_order_; ++d) derivs.push_back(traces.at(d, t));
  return measured_terms(derivs);
}

Eigen::VectorXd InverseSystem::measured_levels(const DerivativeTraces& traces, double t) const {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    const Eigen::MatrixXd& c = rows_[k].coefficients;
    for (Eigen::Index d = 0; d < c.cols(); ++d) {
      f(static_cast<Eigen::Index>(k)) += c.col(d).dot(traces.at(static_cast<int>(d), t));
    }
  }
  return f;
}

Eigen::VectorXd InverseSystem::state_levels(const OperatorMatrix& rho) const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(rows_.size()));
  for (std::size_t k = 0; k < rows_.size(); ++k) v(static_cast<Eigen::Index>(k)) = expectation(rho, rows_[k].op);
  return v;
}

Readout InverseSystem::readout(const OperatorMatrix& rho, const Eigen::VectorXd& measured,
                               double pinv_cutoff) const {
  return readout_inputs(coupling(rho), measured - drift_terms(rho), pinv_cutoff);
}

InversionReport invert(const ProbeModel& model, const InvertibilityVerdict& verdict,
                       const MeasurementRecord& record, const InversionConfig& cfg) {
  cfg.check();
  model.validate();
  record.check();
  if (record.channels() != static_cast<Eigen::Index>(model.outputs())) {
    std::ostringstream msg;
    msg << "invert: record has " << record.channels() << " channels, model measures "
        << model.outputs() << " observables";
    throw std::invalid_argument(msg.str());
  }
  const InverseSystem system(model, verdict);
  const MasterEquation eq(model);
  const DerivativeTraces traces = estimate_derivatives(record, system.max_order(), cfg.derivative_scheme);

  const Eigen::Index n_samples = record.samples();
  const auto m = static_cast<Eigen::Index>(model.inputs());
  const double threshold = cfg.singular_threshold * system.reference_scale();

  InversionReport report;
  report.reference_scale = system.reference_scale();
  report.reconstructed.t0 = record.t0;
  report.reconstructed.dt = record.dt;
  report.reconstructed.values.resize(n_samples, m);
  report.smin.resize(static_cast<std::size_t>(n_samples));
  report.smax.resize(static_cast<std::size_t>(n_samples));
  report.flagged.resize(static_cast<std::size_t>(n_samples));
  report.state_path.reserve(static_cast<std::size_t>(n_samples));

  Eigen::VectorXd hold = Eigen::VectorXd::Zero(m);
  auto held = [&]() {
    return cfg.hold_policy == InversionConfig::HoldPolicy::HoldLast ? hold : Eigen::VectorXd::Zero(m);
  };
  auto target = [&](const OperatorMatrix& rho, double t) -> Eigen::VectorXd {
    Eigen::VectorXd f = system.measured_terms(traces, t) - system.drift_terms(rho);
    if (cfg.output_feedback > 0.0) {
      f += cfg.output_feedback * (system.measured_levels(traces, t) - system.state_levels(rho));
    }
    return f;
  };
  // Input at an intermediate stage: the readout, or the hold value when singular.
  auto stage_input = [&](const OperatorMatrix& rho, double t) -> Eigen::VectorXd {
    const Eigen::MatrixXd coupling = system.coupling(rho);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(coupling);
    const Eigen::VectorXd& s = svd.singularValues();
    const double smin = s.size() < m ? 0.0 : s(s.size() - 1);
    if (smin < threshold || s(0) < 1e-14) return held();
    return readout_inputs(coupling, target(rho, t), cfg.pinv_cutoff).u;
  };

  OperatorMatrix rho = model.initial_state.matrix();
  const double h = record.dt / cfg.substeps;
  for (Eigen::Index k = 0; k < n_samples; ++k) {
    const double t = record.time(k);
    const Eigen::MatrixXd coupling = system.coupling(rho);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(coupling);
    const Eigen::VectorXd& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    const double smin = s.size() < m ? 0.0 : s(s.size() - 1);
    const bool flagged = smin < threshold || smax < 1e-14;
    const auto idx = static_cast<std::size_t>(k);
    report.smin[idx] = smin;
    report.smax[idx] = smax;
    report.flagged[idx] = flagged;
    report.state_path.push_back(rho);
    if (flagged && k == 0) {
      std::ostringstream msg;
      msg << "invert: readout is singular at t=" << t << " ns (s_min " << smin << " < " << threshold
          << "); the initial state must give a nonsingular readout";
      throw SingularReadoutError(msg.str());
    }
    if (!flagged) {
      hold = readout_inputs(coupling, target(rho, t), cfg.pinv_cutoff).u;
      report.reconstructed.values.row(k) = hold.transpose();
    } else {
      report.reconstructed.values.row(k) = held().transpose();
    }
    if (k + 1 == n_samples) break;

    for (int sub = 0; sub < cfg.substeps; ++sub) {
      const double ts = t + sub * h;
      auto rhs = [&](const OperatorMatrix& r, double tt) {
        const Eigen::VectorXd u = stage_input(r, tt);
        return eq.rhs(r, std::span<const double>(u.data(), static_cast<std::size_t>(u.size())));
      };
      const OperatorMatrix k1 = rhs(rho, ts);
      const OperatorMatrix k2 = rhs(rho + (0.5 * h) * k1, ts + 0.5 * h);
      const OperatorMatrix k3 = rhs(rho + (0.5 * h) * k2, ts + 0.5 * h);
      const OperatorMatrix k4 = rhs(rho + h * k3, ts + h);
      rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    const double drift = std::abs(rho.trace() - 1.0);
    if (!(drift <= 1e-6)) {
      std::ostringstream msg;
      msg << "invert: inverse-system state left the physical set near t=" << record.time(k + 1)
          << " ns (trace drift " << drift << ")";
      throw StateInvariantError(msg.str());
    }
  }

  for (std::size_t k = 0; k < report.flagged.size();) {
    if (!report.flagged[k]) {
      ++k;
      continue;
    }
    std::size_t end = k;
    while (end + 1 < report.flagged.size() && report.flagged[end + 1]) ++end;
    report.singular_windows.emplace_back(record.time(static_cast<Eigen::Index>(k)),
                                         record.time(static_cast<Eigen::Index>(end)));
    k = end + 1;
  }
  return report;
}

std::vector<bool> valid_mask(const std::vector<bool>& flagged, int dilation) {
  const auto n = static_cast<std::ptrdiff_t>(flagged.size());
  std::vector<bool> mask(flagged.size(), true);
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    if (!flagged[static_cast<std::size_t>(k)]) continue;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, k - dilation);
         j <= std::min<std::ptrdiff_t>(n - 1, k + dilation); ++j) {
      mask[static_cast<std::size_t>(j)] = false;
    }
  }
  return mask;
}

std::vector<double> relative_l2_error(const SignalTrace& reconstructed,
                                      std::span<const SignalSpec> truth,
                                      const std::vector<bool>& mask) {
  const Eigen::Index m = reconstructed.channels();
  if (static_cast<Eigen::Index>(truth.size()) != m) {
    throw DimensionError("relative_l2_error: channel count mismatch");
  }
  std::vector<double> err(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<double> ref(static_cast<std::size_t>(m) + 1, 0.0);
  for (Eigen::Index k = 0; k < reconstructed.samples(); ++k) {
    if (!mask.empty() && !mask[static_cast<std::size_t>(k)]) continue;
    const double t = reconstructed.time(k);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double u = truth[static_cast<std::size_t>(j)](t);
      const double e = reconstructed.values(k, j) - u;
      err[static_cast<std::size_t>(j)] += e * e;
      ref[static_cast<std::size_t>(j)] += u * u;
    }
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    err.back() += err[static_cast<std::size_t>(j)];
    ref.back() += ref[static_cast<std::size_t>(j)];
  }
  std::vector<double> out(err.size());
  for (std::size_t j = 0; j < err.size(); ++j) {
    out[j] = ref[j] > 0.0 ? std::sqrt(err[j] / ref[j]) : std::sqrt(err[j]);
  }
  return out;
}

RamseyBranches ramsey_direct(const MeasurementRecord& record) {
  record.check();
  if (record.channels() != 1) throw std::invalid_argument("ramsey_direct: scalar record required");
  const DerivativeTraces traces = estimate_derivatives(record, 1, DerivativeScheme::three_point());
  const Eigen::Index n = record.samples();
  RamseyBranches out;
  out.minus_branch.t0 = out.plus_branch.t0 = record.t0;
  out.minus_branch.dt = out.plus_branch.dt = record.dt;
  out.minus_branch.values.resize(n, 1);
  out.plus_branch.values.resize(n, 1);
  out.branch_point.resize(static_cast<std::size_t>(n));
  double last = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double y = record.values(k, 0);
    const double arg = 1.0 - y * y;
    const bool branch = std::abs(arg) < 1e-12 || arg < 0.0;
    out.branch_point[static_cast<std::size_t>(k)] = branch;
    if (!branch) last = traces.derivatives[1](k, 0) / (2.0 * std::sqrt(arg));
    out.minus_branch.values(k, 0) = -last;
    out.plus_branch.values(k, 0) = last;
  }
  return out;
}

}  // namespace insitu
