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

#include "insitu/invertibility.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace insitu {

namespace {

constexpr double kZeroTolerance = 1e-10;

double drift_scale(std::span<const GeneratorTerm> drift) {
  double s = 0.0;
  for (const auto& g : drift) s += generator_scale(g);
  return s;
}

double controls_scale(std::span<const GeneratorTerm> controls) {
  double s = 0.0;
  for (const auto& g : controls) s = std::max(s, generator_scale(g));
  return s;
}

Eigen::MatrixXd stack_rows(const std::vector<Eigen::VectorXd>& rows) {
  if (rows.empty()) return {};
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t k = 0; k < rows.size(); ++k) a.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
  return a;
}

int rank_of(const std::vector<Eigen::VectorXd>& rows, double rel_tol) {
  if (rows.empty()) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack_rows(rows));
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) <= 1e-12) return 0;
  return static_cast<int>((s.array() > rel_tol * s(0)).count());
}

// A candidate observable P with <P> = sum coefficients(i, d) y_i^(d).
struct Candidate {
  OperatorMatrix op;
  Eigen::MatrixXd coefficients;  // n x (level + 1)
  int level = 0;
  int index = 0;  // tie-break order
};

Eigen::MatrixXd pad_columns(const Eigen::MatrixXd& a, Eigen::Index cols) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(a.rows(), cols);
  out.leftCols(a.cols()) = a;
  return out;
}

}  // namespace

ControlArray control_array(std::span<const GeneratorTerm> controls, const OperatorMatrix& obs) {
  ControlArray row;
  row.reserve(controls.size());
  for (const auto& c : controls) row.push_back(apply_adjoint(c, obs));
  return row;
}

Eigen::VectorXd vectorize(const ControlArray& row) {
  Eigen::Index len = 0;
  for (const auto& op : row) len += 2 * op.size();
  Eigen::VectorXd v(len);
  Eigen::Index pos = 0;
  for (const auto& op : row) {
    for (Eigen::Index j = 0; j < op.cols(); ++j) {
      for (Eigen::Index i = 0; i < op.rows(); ++i) {
        v(pos++) = op(i, j).real();
        v(pos++) = op(i, j).imag();
      }
    }
  }
  return v;
}

int operator_rank(const ObservableArray& rows, double rel_tol) {
  std::vector<Eigen::VectorXd> vecs;
  vecs.reserve(rows.rows.size());
  for (const auto& r : rows.rows) vecs.push_back(vectorize(r));
  if (!vecs.empty()) {
    for (const auto& v : vecs) {
      if (v.size() != vecs.front().size()) throw DimensionError("operator_rank: ragged rows");
    }
  }
  return rank_of(vecs, rel_tol);
}

double generator_scale(const GeneratorTerm& term) {
  const double n = operator_norm(term.op);
  return term.kind == GeneratorTerm::Kind::Hamiltonian ? 2.0 * n : 4.0 * n * n;
}

std::vector<int> TransformedObservable::source_indices() const {
  std::vector<int> idx;
  for (Eigen::Index i = 0; i < coefficients.rows(); ++i) {
    if (coefficients.row(i).cwiseAbs().maxCoeff() > 0.0) idx.push_back(static_cast<int>(i));
  }
  return idx;
}

nlohmann::json InvertibilityVerdict::to_json() const {
  nlohmann::json j;
  j["invertible"] = invertible;
  if (relative_degree) {
    j["relative_degree"] = *relative_degree;
  } else {
    j["relative_degree"] = "infinite";
  }
  nlohmann::json prov = nlohmann::json::array();
  for (const auto& row : transformed) {
    nlohmann::json r;
    r["source_indices"] = row.source_indices();
    r["order"] = row.order;
    r["pivot"] = row.pivot;
    // V_row[d][i] multiplies y_i^(d+1) on the right-hand side of the row.
    nlohmann::json v = nlohmann::json::array();
    for (Eigen::Index d = 0; d < row.coefficients.cols(); ++d) {
      std::vector<double> col(row.coefficients.rows());
      for (Eigen::Index i = 0; i < row.coefficients.rows(); ++i) col[i] = row.coefficients(i, d);
      v.push_back(col);
    }
    r["V_row"] = v;
    prov.push_back(r);
  }
  j["observable_provenance"] = prov;
  if (!notes.empty()) j["notes"] = notes;
  return j;
}

InvertibilityVerdict relative_degree_siso(const ProbeModel& model) {
  model.validate();
  if (model.inputs() != 1 || model.outputs() != 1) {
    throw std::invalid_argument("relative_degree_siso: model must have one input and one output");
  }
  const GeneratorTerm& control = model.controls.front();
  const double s0 = drift_scale(model.drift);
  const double s1 = generator_scale(control);
  const auto d = static_cast<int>(model.dim());
  const int k_max = d * d * d * d;

  InvertibilityVerdict verdict;
  OperatorMatrix current = model.observables.front();
  Eigen::MatrixXd coeffs = Eigen::MatrixXd::Ones(1, 1);
  for (int k = 0; k <= k_max; ++k) {
    const double norm = operator_norm(current);
    const OperatorMatrix kk = apply_adjoint(control, current);
    if (operator_norm(kk) > kZeroTolerance * s1 * norm) {
      verdict.invertible = true;
      verdict.relative_degree = k + 1;
      verdict.transformed.push_back({current, k + 1, coeffs, true});
      return verdict;
    }
    const OperatorMatrix next = apply_adjoint_sum(model.drift, current);
    const double next_norm = operator_norm(next);
    if (!(next_norm > kZeroTolerance * s0 * norm) || s0 == 0.0) {
      std::ostringstream msg;
      msg << "(L0*)^" << k + 1 << " O vanishes; every output derivative is input independent";
      verdict.notes = msg.str();
      return verdict;
    }
    // Keep the iterate normalized; rescaling does not change which terms vanish.
    current = next / next_norm;
    Eigen::MatrixXd shifted = Eigen::MatrixXd::Zero(1, k + 2);
    shifted.rightCols(k + 1) = coeffs / next_norm;
    coeffs = shifted;
  }
  verdict.notes = "search cap dim^4 reached";
  return verdict;
}

InvertibilityVerdict transform_observables(const ProbeModel& model) {
  model.validate();
  const std::size_t m = model.inputs();
  const std::size_t n = model.outputs();
  if (n < m) {
    std::ostringstream msg;
    msg << "under-instrumented model: " << n << " observables for " << m
        << " unknown inputs; the number of measured outputs must not be less than the number of inputs";
    throw UnderInstrumentedError(msg.str());
  }
  const double s0 = drift_scale(model.drift);
  const double sc = controls_scale(model.controls);
  const auto d = static_cast<int>(model.dim());
  const int cap = d * d * d * d;

  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 1);
    c(static_cast<Eigen::Index>(i), 0) = 1.0;
    candidates.push_back({model.observables[i], c, 0, static_cast<int>(i)});
  }

  InvertibilityVerdict verdict;
  std::vector<Candidate> pivots;
  std::vector<Eigen::VectorXd> pivot_rows;
  std::vector<OperatorMatrix> pivot_drift;  // L0* of each pivot
  double worst_residual = 0.0;
  int next_index = static_cast<int>(n);

  for (int round = 1; round <= cap; ++round) {
    struct Scored {
      Candidate cand;
      Eigen::VectorXd row;
      double norm;
    };
    std::vector<Scored> scored;
    for (auto& c : candidates) {
      Eigen::VectorXd row = vectorize(control_array(model.controls, c.op));
      const double rn = row.norm();
      scored.push_back({std::move(c), std::move(row), rn});
    }
    // Greedy pivoting: descending row norm, ties by original order.
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) { return a.norm > b.norm; });

    std::vector<Candidate> next;
    for (auto& s : scored) {
      const double op_norm = operator_norm(s.cand.op);
      const bool zero_row = !(s.norm > kZeroTolerance * sc * op_norm);
      bool independent = false;
      if (!zero_row && static_cast<int>(pivot_rows.size()) < static_cast<int>(m)) {
        std::vector<Eigen::VectorXd> trial = pivot_rows;
        trial.push_back(s.row);
        independent = rank_of(trial, kOperatorRankTolerance) > static_cast<int>(pivot_rows.size());
      }
      if (independent) {
        verdict.transformed.push_back({s.cand.op, s.cand.level + 1, s.cand.coefficients, true});
        pivot_rows.push_back(s.row);
        pivot_drift.push_back(apply_adjoint_sum(model.drift, s.cand.op));
        pivots.push_back(s.cand);
        continue;
      }

      // Dependent: Lc* P = sum_j V_j Lc* P_j over the current pivots.
      Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pivots.size()));
      if (!zero_row) {
        verdict.transformed.push_back({s.cand.op, s.cand.level + 1, s.cand.coefficients, false});
        const Eigen::MatrixXd a = stack_rows(pivot_rows).transpose();
        v = a.colPivHouseholderQr().solve(s.row);
        const double residual = (a * v - s.row).norm() / std::max(1.0, s.row.norm());
        worst_residual = std::max(worst_residual, residual);
      }
      OperatorMatrix reduced = apply_adjoint_sum(model.drift, s.cand.op);
      int level = s.cand.level;
      double bound = op_norm;
      for (std::size_t j = 0; j < pivots.size(); ++j) {
        if (v(static_cast<Eigen::Index>(j)) == 0.0) continue;
        reduced -= v(static_cast<Eigen::Index>(j)) * pivot_drift[j];
        level = std::max(level, pivots[j].level);
        bound += std::abs(v(static_cast<Eigen::Index>(j))) * operator_norm(pivots[j].op);
      }
      const double reduced_norm = operator_norm(reduced);
      if (!(reduced_norm > kZeroTolerance * s0 * bound) || s0 == 0.0) continue;

      Eigen::MatrixXd diff = pad_columns(s.cand.coefficients, level + 1);
      for (std::size_t j = 0; j < pivots.size(); ++j) {
        const double vj = v(static_cast<Eigen::Index>(j));
        if (vj == 0.0) continue;
        diff -= vj * pad_columns(pivots[j].coefficients, level + 1);
      }
      Eigen::MatrixXd shifted = Eigen::MatrixXd::Zero(diff.rows(), level + 2);
      shifted.rightCols(level + 1) = diff;
      next.push_back({reduced / reduced_norm, shifted / reduced_norm, level + 1, next_index++});
    }

    if (pivot_rows.size() == m) {
      verdict.invertible = true;
      int alpha = 0;
      for (const auto& row : verdict.transformed) {
        if (row.pivot) alpha = std::max(alpha, row.order);
      }
      verdict.relative_degree = alpha;
      break;
    }
    if (next.empty()) {
      std::ostringstream msg;
      msg << "operator rank stalls at " << pivot_rows.size() << " < " << m
          << "; no further observables can be generated";
      verdict.notes = msg.str();
      break;
    }
    if (round == cap) verdict.notes = "search cap dim^4 reached";
    candidates = std::move(next);
  }

  if (!verdict.invertible) {
    verdict.transformed.clear();
  } else if (worst_residual > 1e-9) {
    std::ostringstream msg;
    msg << "elimination residual " << worst_residual << " exceeds 1e-9";
    verdict.notes = msg.str();
  }
  return verdict;
}

}  // namespace insitu
