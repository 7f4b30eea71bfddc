#pragma once

// Best linear unbiased prediction of the missing entries of a partially
// observed matrix under an R-separable covariance.

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "psca/errors.hpp"
#include "psca/rsep_operator.hpp"
#include "psca/solver.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Which entries are observed. RowCol: (i, j) is observed iff row i and column
/// j are both kept. Arbitrary: mask(i, j) == true means observed.
struct MissingPattern {
  enum class Kind { kRowCol, kArbitrary };
  Kind kind = Kind::kRowCol;
  std::vector<Index> missing_rows;
  std::vector<Index> missing_cols;
  Mask mask;

  static MissingPattern row_col(std::vector<Index> rows, std::vector<Index> cols) {
    MissingPattern p;
    p.kind = Kind::kRowCol;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
    p.missing_rows = std::move(rows);
    p.missing_cols = std::move(cols);
    return p;
  }

  static MissingPattern arbitrary(Mask observed) {
    MissingPattern p;
    p.kind = Kind::kArbitrary;
    p.mask = std::move(observed);
    return p;
  }

  /// Observed-entry mask on a k1 x k2 grid. Throws on out-of-range indices,
  /// a wrong mask shape, or an empty observed set.
  Mask observed_mask(Index k1, Index k2) const {
    Mask m;
    if (kind == Kind::kArbitrary) {
      if (mask.rows() != k1 || mask.cols() != k2) {
        throw ShapeError("MissingPattern: mask must be " + std::to_string(k1) + "x" +
                         std::to_string(k2));
      }
      m = mask;
    } else {
      m = Mask::Constant(k1, k2, true);
      for (Index i : missing_rows) {
        if (i < 0 || i >= k1) throw InvalidArgument("MissingPattern: row index out of range");
        m.row(i).setConstant(false);
      }
      for (Index j : missing_cols) {
        if (j < 0 || j >= k2) throw InvalidArgument("MissingPattern: column index out of range");
        m.col(j).setConstant(false);
      }
    }
    if (m.count() == 0) throw InvalidArgument("MissingPattern: no observed entries");
    return m;
  }

  std::vector<Index> observed_rows(Index k1) const { return complement(missing_rows, k1); }
  std::vector<Index> observed_cols(Index k2) const { return complement(missing_cols, k2); }

 private:
  static std::vector<Index> complement(const std::vector<Index>& drop, Index n) {
    std::vector<bool> gone(static_cast<std::size_t>(n), false);
    for (Index i : drop) {
      if (i < 0 || i >= n) throw InvalidArgument("MissingPattern: index out of range");
      gone[static_cast<std::size_t>(i)] = true;
    }
    std::vector<Index> keep;
    for (Index i = 0; i < n; ++i)
      if (!gone[static_cast<std::size_t>(i)]) keep.push_back(i);
    return keep;
  }
};

namespace detail {

inline Matrix submatrix(const Matrix& m, const std::vector<Index>& rows,
                        const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) out(a, b) = m(rows[a], cols[b]);
  return out;
}

inline void check_indices(const std::vector<Index>& idx, Index n, const char* what) {
  if (idx.empty()) throw InvalidArgument(std::string("restrict_operator: empty ") + what + " set");
  for (Index i : idx) {
    if (i < 0 || i >= n) throw InvalidArgument(std::string("restrict_operator: ") + what +
                                               " index out of range");
  }
}

inline Matrix masked(const Mask& m, const Matrix& x) {
  return m.select(x, Matrix::Zero(x.rows(), x.cols()));
}

}  // namespace detail

/// Covariance of the entries in rows x cols: components A_r[rows, rows],
/// B_r[cols, cols], ridge unchanged. Factors are left unnormalized.
inline RSepOperator restrict_operator(const RSepOperator& op, const std::vector<Index>& rows,
                                      const std::vector<Index>& cols) {
  detail::check_indices(rows, op.k1, "row");
  detail::check_indices(cols, op.k2, "column");
  std::vector<SepComponent> comps;
  comps.reserve(op.components.size());
  for (const auto& c : op.components) {
    comps.push_back(SepComponent{c.score, detail::submatrix(c.left, rows, rows),
                                 detail::submatrix(c.right, cols, cols)});
  }
  RSepOperator out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()),
                   std::move(comps), op.ridge);
  out.normalized_factors = false;
  return out;
}

struct BlupResult {
  Matrix prediction;
  SolveReport solve;
};

/// Sigma_12 Sigma_22^-1 x_2 at the missing positions, x_obs at the observed ones.
/// `op` must be positive definite on the observed block; entries of x_obs at
/// missing positions are ignored. Non-convergence is only reported.
inline BlupResult blup_report(const RSepOperator& op, const Matrix& x_obs,
                              const MissingPattern& pattern, const SolveOptions& opts = {}) {
  if (x_obs.rows() != op.k1 || x_obs.cols() != op.k2) {
    throw ShapeError("blup: observed matrix must be " + std::to_string(op.k1) + "x" +
                     std::to_string(op.k2));
  }
  const Mask obs = pattern.observed_mask(op.k1, op.k2);
  // The K1 K2 cap of pcg is exact-arithmetic termination; restricted systems
  // with a small ridge routinely need a few sweeps more in floating point.
  SolveOptions so = opts;
  if (so.max_iter <= 0) so.max_iter = static_cast<int>(10 * op.k1 * op.k2);
  BlupResult out;
  if (obs.all()) {
    out.prediction = x_obs;
    out.solve.converged = true;
    return out;
  }

  Matrix padded = Matrix::Zero(op.k1, op.k2);
  if (pattern.kind == MissingPattern::Kind::kRowCol) {
    const auto rows = pattern.observed_rows(op.k1);
    const auto cols = pattern.observed_cols(op.k2);
    const RSepOperator sub = restrict_operator(op, rows, cols);
    const Matrix x2 = detail::submatrix(x_obs, rows, cols);
    auto [z, report] = pcg_solve(sub, x2, so);
    out.solve = report;
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = 0; b < cols.size(); ++b)
        padded(rows[a], cols[b]) = z(static_cast<Index>(a), static_cast<Index>(b));
  } else {
    const Preconditioner pre = select_preconditioner(op, so.preconditioner);
    const Matrix x2 = detail::masked(obs, x_obs);
    auto [z, report] = pcg(
        [&](const Matrix& v) { return detail::masked(obs, apply(op, detail::masked(obs, v))); },
        [&](const Matrix& v) { return detail::masked(obs, pre.solve(detail::masked(obs, v))); },
        x2, so);
    report.preconditioner_used = pre.kind();
    out.solve = report;
    padded = detail::masked(obs, z);
  }
  const Matrix full = apply(op, padded);
  out.prediction = obs.select(x_obs, full);
  return out;
}

/// As blup_report, but a solve that does not converge throws NumericalError.
inline Matrix blup(const RSepOperator& op, const Matrix& x_obs, const MissingPattern& pattern,
                   const SolveOptions& opts = {}) {
  BlupResult res = blup_report(op, x_obs, pattern, opts);
  if (!res.solve.converged) {
    throw NumericalError("blup: PCG did not converge (relative residual " +
                         std::to_string(res.solve.final_relative_residual) + ")");
  }
  return std::move(res.prediction);
}

/// Ridge shift making lambda_min >= rel * lambda_max.
inline RSepOperator positivize_relative(const RSepOperator& op, double rel = 1e-8,
                                        std::uint64_t seed = 0) {
  const EigenBounds eb = extremal_eigen(op, 1e-12, 0, seed);
  const double eps = rel * std::max(eb.lambda_max, 0.0);
  const double low = eb.lambda_min - eb.residual_min;
  RSepOperator out = op;
  if (low < eps) out.ridge += eps - low;
  return out;
}

/// blup on the operator positivized with epsilon = 1e-8 lambda_max. A nonempty
/// `mean` is subtracted before prediction and added back afterwards.
inline Matrix blup_positivized(const RSepOperator& op, const Matrix& x_obs,
                               const MissingPattern& pattern, const SolveOptions& opts = {},
                               const Matrix& mean = Matrix()) {
  const RSepOperator pos = positivize_relative(op);
  if (mean.size() == 0) return blup(pos, x_obs, pattern, opts);
  if (mean.rows() != op.k1 || mean.cols() != op.k2) throw ShapeError("blup: mean shape mismatch");
  return blup(pos, x_obs - mean, pattern, opts) + mean;
}

}  // namespace psca
