#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "psca/errors.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

/// Normalization of the empirical covariance.
enum class CovNormalization { kOverN, kOverNMinusOne };

/// N matrix-valued samples of a common k1 x k2 shape.
///
/// Immutable after construction. Effective samples are stacked vertically into
/// one (N*k1) x k2 matrix; when centering is on they are X_n - mean.
class SampleSet {
 public:
  explicit SampleSet(std::vector<Matrix> samples, bool center = true,
                     CovNormalization norm = CovNormalization::kOverN)
      : raw_(std::move(samples)), center_(center), norm_(norm) {
    if (raw_.empty()) throw InvalidArgument("SampleSet: need at least one sample");
    k1_ = raw_.front().rows();
    k2_ = raw_.front().cols();
    if (k1_ <= 0 || k2_ <= 0) throw InvalidArgument("SampleSet: empty sample matrices");
    for (const auto& x : raw_) {
      if (x.rows() != k1_ || x.cols() != k2_) {
        throw ShapeError("SampleSet: samples do not share one shape");
      }
      if (!x.allFinite()) throw InvalidArgument("SampleSet: non-finite sample entry");
    }
    if (norm_ == CovNormalization::kOverNMinusOne && raw_.size() < 2) {
      throw InvalidArgument("SampleSet: 1/(N-1) normalization needs N >= 2");
    }
    mean_ = Matrix::Zero(k1_, k2_);
    for (const auto& x : raw_) mean_ += x;
    mean_ /= static_cast<double>(raw_.size());

    stacked_.resize(static_cast<Index>(raw_.size()) * k1_, k2_);
    for (std::size_t n = 0; n < raw_.size(); ++n) {
      auto block = stacked_.middleRows(static_cast<Index>(n) * k1_, k1_);
      if (center_) {
        block = raw_[n] - mean_;
      } else {
        block = raw_[n];
      }
    }
  }

  std::size_t size() const { return raw_.size(); }
  Index k1() const { return k1_; }
  Index k2() const { return k2_; }
  bool centered() const { return center_; }
  CovNormalization normalization() const { return norm_; }

  const Matrix& raw(std::size_t n) const { return raw_.at(n); }
  const std::vector<Matrix>& raw_samples() const { return raw_; }

  /// Effective (possibly centered) sample n as a view into the stacked storage.
  auto effective(std::size_t n) const {
    return stacked_.middleRows(static_cast<Index>(n) * k1_, k1_);
  }

  /// All effective samples stacked vertically, (N*k1) x k2.
  const Matrix& stacked() const { return stacked_; }

  const Matrix& mean() const { return mean_; }

  /// Divisor of the empirical covariance: N or N-1.
  double divisor() const {
    const double n = static_cast<double>(raw_.size());
    return norm_ == CovNormalization::kOverN ? n : n - 1.0;
  }

  /// A new set built from a subset of the raw samples, with the same settings.
  SampleSet subset(const std::vector<std::size_t>& indices) const {
    std::vector<Matrix> picked;
    picked.reserve(indices.size());
    for (auto i : indices) picked.push_back(raw_.at(i));
    return SampleSet(std::move(picked), center_, norm_);
  }

 private:
  std::vector<Matrix> raw_;
  bool center_;
  CovNormalization norm_;
  Index k1_ = 0;
  Index k2_ = 0;
  Matrix mean_;
  Matrix stacked_;
};

/// Rows are the row-major vectorized effective samples, N x (k1*k2).
inline Matrix data_matrix(const SampleSet& data) {
  Matrix d(static_cast<Index>(data.size()), data.k1() * data.k2());
  for (std::size_t n = 0; n < data.size(); ++n) {
    d.row(static_cast<Index>(n)) = vec_rowmajor(data.effective(n)).transpose();
  }
  return d;
}

/// Empirical covariance c[i,j,k,l] = divisor^-1 sum_n X_n[i,j] X_n[k,l] over the
/// effective samples, without a size guard. Used where a dense covariance is
/// deliberately cheaper than data-level contractions.
inline DenseCov4 empirical_cov_unguarded(const SampleSet& data) {
  const Matrix d = data_matrix(data);
  Matrix op = (d.transpose() * d) / data.divisor();
  return DenseCov4::from_operator(symmetrized(op), data.k1(), data.k2());
}

/// Empirical covariance as an explicit tensor; oracle use, guarded by grid size.
inline DenseCov4 empirical_cov_dense(const SampleSet& data, Index guard = kDefaultOracleGuard) {
  detail::check_oracle_guard(data.k1(), data.k2(), guard, "empirical_cov_dense");
  return empirical_cov_unguarded(data);
}

}  // namespace psca
