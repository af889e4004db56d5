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

#include <algorithm>
#include <cmath>
#include <sstream>

#include "insitu/inversion.hpp"

namespace insitu {

namespace {

// Central differences inside, second-order one-sided stencils at both ends.
Eigen::MatrixXd three_point(const Eigen::MatrixXd& y, double h) {
  const Eigen::Index n = y.rows();
  Eigen::MatrixXd d(n, y.cols());
  d.row(0) = (-3.0 * y.row(0) + 4.0 * y.row(1) - y.row(2)) / (2.0 * h);
  for (Eigen::Index k = 1; k + 1 < n; ++k) d.row(k) = (y.row(k + 1) - y.row(k - 1)) / (2.0 * h);
  d.row(n - 1) = (3.0 * y.row(n - 1) - 4.0 * y.row(n - 2) + y.row(n - 3)) / (2.0 * h);
  return d;
}

// weights(offset, j): contribution of sample (start + j) to the derivative of
// order `order` at sample (start + offset) for a window fit of the given degree.
Eigen::MatrixXd savgol_weights(int window, int degree, int order, double h) {
  Eigen::MatrixXd weights(window, window);
  double factorial = 1.0;
  for (int r = 2; r <= order; ++r) factorial *= r;
  for (int offset = 0; offset < window; ++offset) {
    Eigen::MatrixXd vander(window, degree + 1);
    for (int j = 0; j < window; ++j) {
      const double x = static_cast<double>(j - offset);
      double p = 1.0;
      for (int q = 0; q <= degree; ++q) {
        vander(j, q) = p;
        p *= x;
      }
    }
    // Polynomial coefficients a = (V^T V)^-1 V^T y; the derivative is order! * a_order / h^order.
    const Eigen::MatrixXd pinv = vander.completeOrthogonalDecomposition().pseudoInverse();
    weights.row(offset) = pinv.row(order) * (factorial / std::pow(h, order));
  }
  return weights;
}

Eigen::MatrixXd savitzky_golay(const Eigen::MatrixXd& y, double h, int window, int degree, int order) {
  const Eigen::Index n = y.rows();
  const Eigen::MatrixXd w = savgol_weights(window, degree, order, h);
  const int half = window / 2;
  Eigen::MatrixXd d(n, y.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index start = std::clamp<Eigen::Index>(k - half, 0, n - window);
    const auto offset = static_cast<Eigen::Index>(k - start);
    d.row(k) = w.row(offset) * y.middleRows(start, window);
  }
  return d;
}

void check_scheme(const DerivativeScheme& scheme) {
  if (scheme.kind != DerivativeScheme::Kind::SavitzkyGolay) return;
  if (scheme.window < 5 || scheme.window % 2 == 0) {
    throw std::invalid_argument("savitzky-golay window must be odd and >= 5");
  }
  if (scheme.degree < 1 || scheme.degree >= scheme.window) {
    throw std::invalid_argument("savitzky-golay degree must be in [1, window)");
  }
}

}  // namespace

void InversionConfig::check() const {
  check_scheme(derivative_scheme);
  if (!(singular_threshold >= 0.0)) throw std::invalid_argument("singular_threshold must be >= 0");
  if (!(pinv_cutoff >= 0.0 && pinv_cutoff < 1.0)) {
    throw std::invalid_argument("pinv_cutoff must be in [0, 1)");
  }
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (!(output_feedback >= 0.0)) throw std::invalid_argument("output_feedback must be >= 0");
}

Eigen::VectorXd DerivativeTraces::at(int order, double t) const {
  const Eigen::MatrixXd& d = derivatives.at(static_cast<std::size_t>(order));
  const Eigen::Index n = d.rows();
  const double s = (t - t0) / dt;
  if (s <= 0.0) return d.row(0).transpose();
  if (s >= static_cast<double>(n - 1)) return d.row(n - 1).transpose();
  const auto k = static_cast<Eigen::Index>(std::floor(s));
  const double frac = s - static_cast<double>(k);
  if (frac == 0.0) return d.row(k).transpose();
  return ((1.0 - frac) * d.row(k) + frac * d.row(k + 1)).transpose();
}

DerivativeTraces estimate_derivatives(const MeasurementRecord& record, int order,
                                      const DerivativeScheme& scheme) {
  record.check();
  check_scheme(scheme);
  if (order < 1) throw std::invalid_argument("estimate_derivatives: order must be >= 1");
  const Eigen::Index needed = scheme.kind == DerivativeScheme::Kind::ThreePoint
                                  ? 2 * order + 1
                                  : std::max<Eigen::Index>(2 * order + 1, scheme.window);
  if (record.samples() < needed) {
    std::ostringstream msg;
    msg << "estimate_derivatives: record has " << record.samples() << " samples, need " << needed;
    throw std::invalid_argument(msg.str());
  }
  DerivativeTraces out;
  out.t0 = record.t0;
  out.dt = record.dt;
  out.derivatives.push_back(record.values);
  if (scheme.kind == DerivativeScheme::Kind::ThreePoint) {
    for (int k = 1; k <= order; ++k) out.derivatives.push_back(three_point(out.derivatives.back(), record.dt));
  } else {
    if (order > scheme.degree) {
      throw std::invalid_argument("estimate_derivatives: savitzky-golay degree below derivative order");
    }
    for (int k = 1; k <= order; ++k) {
      out.derivatives.push_back(
          savitzky_golay(record.values, record.dt, scheme.window, scheme.degree, k));
    }
  }
  return out;
}

}  // namespace insitu
