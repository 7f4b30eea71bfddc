#pragma once

// R-separable covariance operators sum_r sigma_r A_r ~x B_r + c I: fast
// application, extremal eigenvalues, positivization and the preconditioners
// built from the leading term.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "psca/errors.hpp"
#include "psca/random.hpp"
#include "psca/scd_fit.hpp"
#include "psca/separable_component.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

struct RSepOperator {
  Index k1 = 0;
  Index k2 = 0;
  std::vector<SepComponent> components;  // components[0] is the leading term
  /// Coefficient of the identity term. Non-negative everywhere except where a
  /// condition number is targeted on an already definite operator, which can
  /// call for a small negative shift.
  double ridge = 0.0;
  /// False for restrictions to index subsets, whose factors are not unit norm.
  bool normalized_factors = true;

  RSepOperator() = default;
  RSepOperator(Index k1_, Index k2_, std::vector<SepComponent> comps, double ridge_ = 0.0)
      : k1(k1_), k2(k2_), components(std::move(comps)), ridge(ridge_) {
    if (k1 <= 0 || k2 <= 0) throw InvalidArgument("RSepOperator: grid sizes must be positive");
    if (!std::isfinite(ridge)) throw InvalidArgument("RSepOperator: ridge must be finite");
    for (const auto& c : components) {
      if (c.left.rows() != k1 || c.left.cols() != k1 || c.right.rows() != k2 ||
          c.right.cols() != k2) {
        throw ShapeError("RSepOperator: component shape does not match the grid");
      }
    }
  }

  static RSepOperator from_estimate(const ScdEstimate& est, double ridge = 0.0) {
    return RSepOperator(est.k1, est.k2, est.components, ridge);
  }

  std::size_t size() const { return components.size(); }

  /// Number of separable terms counting the ridge as one.
  std::size_t degree_of_separability() const { return components.size() + (ridge != 0.0 ? 1 : 0); }

  /// Operator matrix on row-major vectorized k1 x k2 matrices; oracle use only.
  Matrix dense_operator() const {
    const Index n = k1 * k2;
    Matrix m = ridge * Matrix::Identity(n, n);
    for (const auto& c : components) {
      for (Index i = 0; i < k1; ++i)
        for (Index j = 0; j < k2; ++j)
          for (Index k = 0; k < k1; ++k)
            for (Index l = 0; l < k2; ++l)
              m(i * k2 + j, k * k2 + l) += c.score * c.left(i, k) * c.right(j, l);
    }
    return m;
  }
};

/// sum_r sigma_r A_r X B_r + ridge X, O(R k1 k2 (k1 + k2)) flops.
inline Matrix apply(const RSepOperator& op, const Matrix& x) {
  if (x.rows() != op.k1 || x.cols() != op.k2) {
    throw ShapeError("apply: argument must be " + std::to_string(op.k1) + "x" +
                     std::to_string(op.k2));
  }
  Matrix y = op.ridge * x;
  Matrix tmp(op.k1, op.k2);
  for (const auto& c : op.components) {
    tmp.noalias() = c.left * x;
    y.noalias() += c.score * tmp * c.right.transpose();
  }
  return y;
}

enum class EigenMethod {
  kLanczos,  // Krylov acceleration of power iteration, full reorthogonalization
  kPower,    // plain power iteration on op, then on lambda_bar I - op
};

struct EigenBounds {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  /// Residual bounds: the true extremal eigenvalues lie within these distances
  /// (Lanczos only; zero for power iteration).
  double residual_max = 0.0;
  double residual_min = 0.0;
  int iterations_max = 0;
  int iterations_min = 0;
  bool converged = false;  // false: best estimates after max_iter, treat as a warning
};

namespace detail {

struct PowerResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Power iteration for the eigenvalue of largest magnitude of a symmetric
// operator, estimated by the Rayleigh quotient; stops on relative change < tol.
template <typename Apply>
PowerResult power_iteration(Apply&& op, Matrix x, double tol, int max_iter) {
  PowerResult out;
  x /= x.norm();
  double prev = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Matrix y = op(x);
    const double rq = frob_inner(x, y);
    const double ny = y.norm();
    out.iterations = it;
    out.value = rq;
    if (ny == 0.0) {
      out.converged = true;
      break;
    }
    if (it > 1 && std::abs(rq - prev) <= tol * std::abs(rq)) {
      out.converged = true;
      break;
    }
    prev = rq;
    x = y / ny;
  }
  return out;
}

inline EigenBounds power_bounds(const RSepOperator& op, const Matrix& x0, const Matrix& x1,
                                double tol, int max_iter) {
  const auto dominant = power_iteration([&](const Matrix& x) { return apply(op, x); }, x0, tol,
                                        max_iter);
  EigenBounds out;
  if (dominant.value >= 0.0) {
    const double bar = dominant.value * (1.0 + 1e-6);
    const auto flipped = power_iteration(
        [&](const Matrix& x) { return Matrix(bar * x - apply(op, x)); }, x1, tol, max_iter);
    out.lambda_max = dominant.value;
    out.lambda_min = bar - flipped.value;
    out.iterations_max = dominant.iterations;
    out.iterations_min = flipped.iterations;
    out.converged = dominant.converged && flipped.converged;
  } else {
    const double bar = dominant.value * (1.0 + 1e-6);
    const auto shifted = power_iteration(
        [&](const Matrix& x) { return Matrix(apply(op, x) - bar * x); }, x1, tol, max_iter);
    out.lambda_min = dominant.value;
    out.lambda_max = bar + shifted.value;
    out.iterations_min = dominant.iterations;
    out.iterations_max = shifted.iterations;
    out.converged = dominant.converged && shifted.converged;
  }
  out.lambda_min = std::min(out.lambda_min, out.lambda_max);
  return out;
}

// Lanczos with full reorthogonalization. Stops when both extremal Ritz pairs
// have residual norm <= tol * max(|theta_max|, |theta_min|), or the Krylov
// space is exhausted.
inline EigenBounds lanczos_bounds(const RSepOperator& op, const Matrix& x0, double tol,
                                  int max_steps) {
  const Index n = op.k1 * op.k2;
  const Index m_max = std::min<Index>(n, std::max(max_steps, 1));
  Matrix basis(n, m_max);
  std::vector<double> alpha, beta;
  basis.col(0) = vec_rowmajor(x0).normalized();
  EigenBounds out;
  const auto finish = [&](Index m, bool exhausted) {
    Matrix t = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      t(i, i) = alpha[static_cast<std::size_t>(i)];
      if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(t);
    const double b = exhausted ? 0.0 : beta[static_cast<std::size_t>(m - 1)];
    out.lambda_min = es.eigenvalues()(0);
    out.lambda_max = es.eigenvalues()(m - 1);
    out.residual_min = std::abs(b * es.eigenvectors()(m - 1, 0));
    out.residual_max = std::abs(b * es.eigenvectors()(m - 1, m - 1));
    out.iterations_max = out.iterations_min = static_cast<int>(m);
    const double scale = std::max(std::abs(out.lambda_max), std::abs(out.lambda_min));
    return exhausted || std::max(out.residual_min, out.residual_max) <= tol * scale;
  };
  for (Index j = 0; j < m_max; ++j) {
    Vector w = vec_rowmajor(apply(op, unvec_rowmajor(basis.col(j), op.k1, op.k2)));
    alpha.push_back(basis.col(j).dot(w));
    // Two passes of classical Gram-Schmidt against the whole basis.
    for (int pass = 0; pass < 2; ++pass) {
      w.noalias() -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    }
    const double b = w.norm();
    beta.push_back(b);
    const bool exhausted = j + 1 == n || b <= 1e-14 * std::max(1.0, std::abs(alpha.back()));
    const bool check = exhausted || j + 1 == m_max || (j + 1) % 5 == 0;
    if (check && finish(j + 1, exhausted)) {
      out.converged = true;
      return out;
    }
    if (j + 1 == m_max) break;
    basis.col(j + 1) = w / b;
  }
  out.converged = false;
  return out;
}

}  // namespace detail

/// Largest and smallest eigenvalue of a self-adjoint operator.
///
/// Lanczos (default): Ritz values of the Krylov space of a seeded random start,
/// stopped when both extremal residual bounds fall below tol times the spectral
/// scale; max_iter <= 0 means k1 k2 steps. Power: power iteration on the
/// operator, then on lambda_bar I - op with lambda_bar = lambda_max (1 + 1e-6),
/// roles swapped if the dominant eigenvalue is negative, stopping on relative
/// Rayleigh-quotient change < tol; max_iter <= 0 means 10 k1 k2.
inline EigenBounds extremal_eigen(const RSepOperator& op, double tol = 1e-8, int max_iter = 0,
                                  std::uint64_t seed = 0,
                                  EigenMethod method = EigenMethod::kLanczos) {
  if (!(tol > 0.0)) throw InvalidArgument("extremal_eigen: tol must be positive");
  Rng rng(derive_seed(seed, {0x5eed}));
  const Matrix x0 = normal_matrix(op.k1, op.k2, rng);
  if (method == EigenMethod::kLanczos) {
    if (max_iter <= 0) max_iter = static_cast<int>(op.k1 * op.k2);
    return detail::lanczos_bounds(op, x0, tol, max_iter);
  }
  if (max_iter <= 0) max_iter = static_cast<int>(10 * op.k1 * op.k2);
  const Matrix x1 = normal_matrix(op.k1, op.k2, rng);
  return detail::power_bounds(op, x0, x1, tol, max_iter);
}

struct PositivizeReport {
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  double epsilon = 0.0;
  double applied_shift = 0.0;
  bool converged = true;
};

/// Adds (epsilon - lambda_min) I when lambda_min < epsilon; otherwise returns
/// the operator untouched. lambda_min is the Lanczos estimate lowered by its
/// residual bound, so the result is positive semi-definite even when the
/// estimate is slightly high.
inline std::pair<RSepOperator, PositivizeReport> positivize(const RSepOperator& op, double epsilon,
                                                            double tol = 1e-8, int max_iter = 0,
                                                            std::uint64_t seed = 0) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("positivize: epsilon must be non-negative");
  const EigenBounds eb = extremal_eigen(op, tol, max_iter, seed);
  PositivizeReport report;
  report.lambda_max = eb.lambda_max;
  report.lambda_min = eb.lambda_min - eb.residual_min;
  report.epsilon = epsilon;
  report.converged = eb.converged;
  RSepOperator out = op;
  if (report.lambda_min < epsilon) {
    report.applied_shift = epsilon - report.lambda_min;
    out.ridge += report.applied_shift;
  }
  return {std::move(out), report};
}

enum class PrecondKind { kNone, kSeparable, kStein };

inline const char* to_string(PrecondKind k) {
  switch (k) {
    case PrecondKind::kNone:
      return "none";
    case PrecondKind::kSeparable:
      return "separable";
    case PrecondKind::kStein:
      return "stein";
  }
  return "unknown";
}

/// P = sigma_1 A_1 ~x B_1 + shift I, inverted exactly through the eigenpairs of
/// A_1 and B_1: eigenvalues sigma_1 lambda_i rho_j + shift.
class Preconditioner {
 public:
  /// Identity preconditioner for a k1 x k2 grid.
  static Preconditioner none(Index k1, Index k2) {
    Preconditioner p;
    p.kind_ = PrecondKind::kNone;
    p.k1_ = k1;
    p.k2_ = k2;
    return p;
  }

  /// Separable (shift 0) or Stein (shift = op.ridge) preconditioner from the
  /// leading component. Throws NumericalError unless every eigenvalue exceeds
  /// 1e-12 times the largest.
  static Preconditioner build(const RSepOperator& op, PrecondKind kind) {
    if (kind == PrecondKind::kNone) return none(op.k1, op.k2);
    if (op.components.empty()) {
      throw NumericalError("Preconditioner: operator has no separable component");
    }
    const SepComponent& lead = op.components.front();
    Preconditioner p;
    p.kind_ = kind;
    p.k1_ = op.k1;
    p.k2_ = op.k2;
    p.left_ = sym_eigen(lead.left);
    p.right_ = sym_eigen(lead.right);
    p.sigma1_ = lead.score;
    p.shift_ = kind == PrecondKind::kStein ? op.ridge : 0.0;
    p.denom_ = p.sigma1_ * p.left_.values * p.right_.values.transpose();
    p.denom_.array() += p.shift_;
    const double top = p.denom_.cwiseAbs().maxCoeff();
    const double bottom = p.denom_.minCoeff();
    if (!(bottom > 1e-12 * top) || !(top > 0.0)) {
      throw NumericalError(std::string("Preconditioner: ") + to_string(kind) +
                           " preconditioner has a non-positive eigenvalue");
    }
    return p;
  }

  PrecondKind kind() const { return kind_; }
  double sigma1() const { return sigma1_; }
  double shift() const { return shift_; }
  const SymmetricEigen& left_eigen() const { return left_; }
  const SymmetricEigen& right_eigen() const { return right_; }

  /// P^-1 y = U ((U^T y V) ./ D) V^T.
  Matrix solve(const Matrix& y) const {
    if (y.rows() != k1_ || y.cols() != k2_) throw ShapeError("precondition_solve: shape mismatch");
    if (kind_ == PrecondKind::kNone) return y;
    Matrix t = left_.vectors.transpose() * y * right_.vectors;
    t.array() /= denom_.array();
    return left_.vectors * t * right_.vectors.transpose();
  }

  /// P x.
  Matrix apply(const Matrix& x) const {
    if (x.rows() != k1_ || x.cols() != k2_) throw ShapeError("Preconditioner::apply: shape mismatch");
    if (kind_ == PrecondKind::kNone) return x;
    Matrix t = left_.vectors.transpose() * x * right_.vectors;
    t.array() *= denom_.array();
    return left_.vectors * t * right_.vectors.transpose();
  }

 private:
  PrecondKind kind_ = PrecondKind::kNone;
  Index k1_ = 0;
  Index k2_ = 0;
  SymmetricEigen left_;
  SymmetricEigen right_;
  double sigma1_ = 0.0;
  double shift_ = 0.0;
  Matrix denom_;  // sigma_1 lambda_i rho_j + shift
};

inline Matrix precondition_solve(const Preconditioner& p, const Matrix& y) { return p.solve(y); }

}  // namespace psca
