#pragma once

// Core numeric types: matrices, the explicit order-4 covariance tensor, symmetric
// eigendecomposition, and the brute-force separable component decomposition used
// as an oracle on small grids.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "psca/errors.hpp"

namespace psca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Default size guard for dense oracles (k1, k2 <= 16).
inline constexpr Index kDefaultOracleGuard = 16;

inline double frob_inner(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("frob_inner: shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
  return (a.array() * b.array()).sum();
}

inline double frob_norm(const Matrix& a) { return a.norm(); }

/// Converts a Frobenius (counting-measure) norm on a k1 x k2 grid into the
/// continuum Hilbert-Schmidt norm of the corresponding step-function kernel.
inline double hilbert_schmidt_from_frobenius(double frobenius, Index k1, Index k2) {
  return frobenius / static_cast<double>(k1 * k2);
}

/// Row-major vectorization: v[i * cols + j] = x(i, j).
inline Vector vec_rowmajor(const Matrix& x) {
  Vector v(x.size());
  const Index cols = x.cols();
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < cols; ++j) v[i * cols + j] = x(i, j);
  }
  return v;
}

inline Matrix unvec_rowmajor(const Eigen::Ref<const Vector>& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw ShapeError("unvec_rowmajor: length mismatch");
  Matrix x(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) x(i, j) = v[i * cols + j];
  }
  return x;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

/// Relative asymmetry ||M - M^T||_F / ||M||_F (0 for the zero matrix).
inline double asymmetry(const Matrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  const double n = m.norm();
  if (n == 0.0) return 0.0;
  return (m - m.transpose()).norm() / n;
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

/// Explicit covariance tensor c[i,j,k,l] with i,k in [0,k1) and j,l in [0,k2).
///
/// Stored as the (k1*k2) x (k1*k2) operator matrix acting on row-major
/// vectorized k1 x k2 matrices: row i*k2+j, column k*k2+l. Self-adjointness of
/// the tensor is symmetry of this matrix.
class DenseCov4 {
 public:
  DenseCov4() = default;

  DenseCov4(Index k1, Index k2) : k1_(k1), k2_(k2), op_(Matrix::Zero(k1 * k2, k1 * k2)) {
    if (k1 <= 0 || k2 <= 0) throw InvalidArgument("DenseCov4: grid sizes must be positive");
  }

  /// Wraps an operator matrix. Rejects non-finite entries and asymmetry above
  /// 1e-10 relative, then stores the exactly symmetrized matrix.
  static DenseCov4 from_operator(Matrix op, Index k1, Index k2) {
    if (k1 <= 0 || k2 <= 0) throw InvalidArgument("DenseCov4: grid sizes must be positive");
    if (op.rows() != k1 * k2 || op.cols() != k1 * k2) {
      throw ShapeError("DenseCov4::from_operator: operator must be (k1*k2) square");
    }
    if (!op.allFinite()) throw InvalidArgument("DenseCov4: non-finite entries");
    if (asymmetry(op) > 1e-10) {
      throw InvalidArgument("DenseCov4: tensor is not self-adjoint (c[i,j,k,l] != c[k,l,i,j])");
    }
    DenseCov4 c;
    c.k1_ = k1;
    c.k2_ = k2;
    c.op_ = symmetrized(op);
    return c;
  }

  Index k1() const { return k1_; }
  Index k2() const { return k2_; }

  double operator()(Index i, Index j, Index k, Index l) const {
    return op_(i * k2_ + j, k * k2_ + l);
  }

  /// Sets c[i,j,k,l] and its mirror c[k,l,i,j].
  void set_symmetric(Index i, Index j, Index k, Index l, double value) {
    op_(i * k2_ + j, k * k2_ + l) = value;
    op_(k * k2_ + l, i * k2_ + j) = value;
  }

  const Matrix& as_operator() const { return op_; }

  double frob_norm() const { return op_.norm(); }

  /// Applies the covariance to a k1 x k2 matrix: (C X)[i,j] = sum_{k,l} c[i,j,k,l] X[k,l].
  Matrix apply(const Matrix& x) const {
    if (x.rows() != k1_ || x.cols() != k2_) throw ShapeError("DenseCov4::apply: shape mismatch");
    return unvec_rowmajor(op_ * vec_rowmajor(x), k1_, k2_);
  }

  DenseCov4& operator+=(const DenseCov4& o) {
    check_same_grid(o);
    op_ += o.op_;
    return *this;
  }
  DenseCov4& operator-=(const DenseCov4& o) {
    check_same_grid(o);
    op_ -= o.op_;
    return *this;
  }
  DenseCov4& operator*=(double s) {
    op_ *= s;
    return *this;
  }
  friend DenseCov4 operator+(DenseCov4 a, const DenseCov4& b) { return a += b; }
  friend DenseCov4 operator-(DenseCov4 a, const DenseCov4& b) { return a -= b; }
  friend DenseCov4 operator*(double s, DenseCov4 a) { return a *= s; }

 private:
  void check_same_grid(const DenseCov4& o) const {
    if (o.k1_ != k1_ || o.k2_ != k2_) throw ShapeError("DenseCov4: grid mismatch");
  }

  Index k1_ = 0;
  Index k2_ = 0;
  Matrix op_;
};

/// Outer construction (A ~x B)[i,j,k,l] = A[i,k] * B[j,l].
inline DenseCov4 separable_dense(const Matrix& a, const Matrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols()) {
    throw ShapeError("separable_dense: factors must be square");
  }
  const Index k1 = a.rows(), k2 = b.rows();
  Matrix op(k1 * k2, k1 * k2);
  for (Index i = 0; i < k1; ++i)
    for (Index j = 0; j < k2; ++j)
      for (Index k = 0; k < k1; ++k)
        for (Index l = 0; l < k2; ++l) op(i * k2 + j, k * k2 + l) = a(i, k) * b(j, l);
  return DenseCov4::from_operator(std::move(op), k1, k2);
}

/// Rearrangement M[i*k1+k, j*k2+l] = c[i,j,k,l] (shape k1^2 x k2^2). An isometry.
inline Matrix rearrange(const DenseCov4& c) {
  const Index k1 = c.k1(), k2 = c.k2();
  const Matrix& op = c.as_operator();
  Matrix m(k1 * k1, k2 * k2);
  for (Index i = 0; i < k1; ++i)
    for (Index j = 0; j < k2; ++j)
      for (Index k = 0; k < k1; ++k)
        for (Index l = 0; l < k2; ++l) m(i * k1 + k, j * k2 + l) = op(i * k2 + j, k * k2 + l);
  return m;
}

/// Inverse of rearrange. Throws if the result is not self-adjoint.
inline DenseCov4 unrearrange(const Matrix& m, Index k1, Index k2) {
  if (m.rows() != k1 * k1 || m.cols() != k2 * k2) throw ShapeError("unrearrange: shape mismatch");
  Matrix op(k1 * k2, k1 * k2);
  for (Index i = 0; i < k1; ++i)
    for (Index j = 0; j < k2; ++j)
      for (Index k = 0; k < k1; ++k)
        for (Index l = 0; l < k2; ++l) op(i * k2 + j, k * k2 + l) = m(i * k1 + k, j * k2 + l);
  return DenseCov4::from_operator(std::move(op), k1, k2);
}

struct SymmetricEigen {
  Vector values;   // non-increasing
  Matrix vectors;  // orthonormal columns, vectors.col(i) pairs with values[i]
};

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted non-increasing.
/// Input must be symmetric within 1e-8 relative; it is symmetrized first.
inline SymmetricEigen sym_eigen(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("sym_eigen: matrix is not square");
  if (m.size() == 0) throw ShapeError("sym_eigen: empty matrix");
  if (!m.allFinite()) throw InvalidArgument("sym_eigen: non-finite entries");
  if (asymmetry(m) > 1e-8) throw InvalidArgument("sym_eigen: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrized(m));
  if (solver.info() != Eigen::Success) throw NumericalError("sym_eigen: eigensolver failed");
  SymmetricEigen out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// Joint sign rule for a separable pair: flip both factors so that the entry
/// of `left` with the largest magnitude is positive. Near-ties (within 1e-8
/// relative) go to the lowest row-major index. Returns true if flipped.
inline bool apply_sign_rule(Matrix& left, Matrix& right) {
  const double amax = left.cwiseAbs().maxCoeff();
  if (amax == 0.0) return false;
  const double cutoff = amax * (1.0 - 1e-8);
  for (Index i = 0; i < left.rows(); ++i) {
    for (Index j = 0; j < left.cols(); ++j) {
      const double v = left(i, j);
      if (std::abs(v) >= cutoff) {
        if (v < 0.0) {
          left = -left;
          right = -right;
          return true;
        }
        return false;
      }
    }
  }
  return false;
}

/// Full separable component decomposition of a dense tensor.
struct ScdFull {
  std::vector<double> scores;  // non-increasing, non-negative
  std::vector<Matrix> left;    // k1 x k1, orthonormal in the Frobenius inner product
  std::vector<Matrix> right;   // k2 x k2, orthonormal in the Frobenius inner product

  std::size_t size() const { return scores.size(); }
};

namespace detail {

inline void check_oracle_guard(Index k1, Index k2, Index guard, const char* who) {
  if (k1 > guard || k2 > guard) {
    throw OracleSizeError(std::string(who) + ": grid " + std::to_string(k1) + "x" +
                          std::to_string(k2) + " exceeds oracle guard " + std::to_string(guard));
  }
}

inline ScdFull scd_from_svd(const Matrix& m, Index k1, Index k2) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ScdFull out;
  const Index count = svd.singularValues().size();
  for (Index r = 0; r < count; ++r) {
    Matrix a = unvec_rowmajor(svd.matrixU().col(r), k1, k1);
    Matrix b = unvec_rowmajor(svd.matrixV().col(r), k2, k2);
    apply_sign_rule(a, b);
    out.scores.push_back(svd.singularValues()[r]);
    out.left.push_back(std::move(a));
    out.right.push_back(std::move(b));
  }
  return out;
}

// Orthogonal projector onto row-major vectorized symmetric k x k matrices.
inline Matrix symmetric_projector(Index k) {
  Matrix p = Matrix::Zero(k * k, k * k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) {
      p(i * k + j, i * k + j) += 0.5;
      p(i * k + j, j * k + i) += 0.5;
    }
  }
  return p;
}

}  // namespace detail

/// SVD of the rearranged tensor reshaped into separable components; the oracle
/// for the power-iteration fit. Components carry the joint sign rule.
inline ScdFull brute_force_scd(const DenseCov4& c, Index guard = kDefaultOracleGuard) {
  detail::check_oracle_guard(c.k1(), c.k2(), guard, "brute_force_scd");
  return detail::scd_from_svd(rearrange(c), c.k1(), c.k2());
}

/// Like brute_force_scd, restricted to components with symmetric factors.
///
/// The rearranged matrix of a self-adjoint tensor splits into a symmetric block
/// and a skew block. Power iteration started from a symmetric matrix never
/// leaves the symmetric block, so this is the decomposition it converges to.
inline ScdFull brute_force_scd_symmetric(const DenseCov4& c, Index guard = kDefaultOracleGuard) {
  detail::check_oracle_guard(c.k1(), c.k2(), guard, "brute_force_scd_symmetric");
  const Matrix m = detail::symmetric_projector(c.k1()) * rearrange(c) *
                   detail::symmetric_projector(c.k2());
  ScdFull full = detail::scd_from_svd(m, c.k1(), c.k2());
  for (auto& a : full.left) a = symmetrized(a);
  for (auto& b : full.right) b = symmetrized(b);
  return full;
}

/// Materializes sum_j scores[j] * left[j] ~x right[j] for the first `count` terms.
inline DenseCov4 reconstruct_from(const std::vector<double>& scores, const std::vector<Matrix>& left,
                                  const std::vector<Matrix>& right, Index k1, Index k2,
                                  std::size_t count) {
  count = std::min({count, scores.size(), left.size(), right.size()});
  Matrix m = Matrix::Zero(k1 * k1, k2 * k2);
  for (std::size_t r = 0; r < count; ++r) {
    m.noalias() += scores[r] * vec_rowmajor(left[r]) * vec_rowmajor(right[r]).transpose();
  }
  return unrearrange(m, k1, k2);
}

inline DenseCov4 reconstruct(const ScdFull& scd, Index k1, Index k2, std::size_t count) {
  return reconstruct_from(scd.scores, scd.left, scd.right, k1, k2, count);
}

}  // namespace psca
