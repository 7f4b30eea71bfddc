#pragma once

// Partial inner products T1 and T2 of a covariance against a weight matrix.
//
//   T2(C, W)[i,k] = sum_{j,l} c[i,j,k,l] W[j,l]   (W is k2 x k2, result k1 x k1)
//   T1(C, W)[j,l] = sum_{i,k} c[i,j,k,l] W[i,k]   (W is k1 x k1, result k2 x k2)
//
// The covariance is seen through a CovView: an explicit tensor, the empirical
// covariance of a SampleSet (never materialized), or either of those with
// separable components subtracted lazily.

#include <memory>
#include <utility>
#include <variant>
#include <vector>

#include "psca/errors.hpp"
#include "psca/sample_set.hpp"
#include "psca/separable_component.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

class CovView {
 public:
  static CovView dense(std::shared_ptr<const DenseCov4> cov) {
    if (!cov) throw InvalidArgument("CovView::dense: null covariance");
    DenseRep rep{cov, std::make_shared<const Matrix>(rearrange(*cov))};
    return CovView(std::move(rep));
  }
  static CovView dense(DenseCov4 cov) {
    return dense(std::make_shared<const DenseCov4>(std::move(cov)));
  }

  static CovView data(std::shared_ptr<const SampleSet> samples) {
    if (!samples) throw InvalidArgument("CovView::data: null sample set");
    return CovView(DataRep{std::move(samples)});
  }
  static CovView data(SampleSet samples) {
    return data(std::make_shared<const SampleSet>(std::move(samples)));
  }

  /// The same base with `more` subtracted in addition to anything already
  /// subtracted. Nesting is flattened into one list.
  CovView deflated(const std::vector<SepComponent>& more) const {
    CovView out = *this;
    for (const auto& c : more) {
      if (c.left.rows() != k1_ || c.left.cols() != k1_ || c.right.rows() != k2_ ||
          c.right.cols() != k2_) {
        throw ShapeError("CovView::deflated: component shape does not match the grid");
      }
      out.subtracted_.push_back(c);
    }
    return out;
  }

  Index k1() const { return k1_; }
  Index k2() const { return k2_; }
  bool is_dense() const { return std::holds_alternative<DenseRep>(base_); }
  bool is_data() const { return std::holds_alternative<DataRep>(base_); }
  bool is_deflated() const { return !subtracted_.empty(); }
  const std::vector<SepComponent>& subtracted() const { return subtracted_; }

  /// Base covariance without deflation.
  CovView base() const {
    CovView out = *this;
    out.subtracted_.clear();
    return out;
  }

  const SampleSet* samples() const {
    if (auto* d = std::get_if<DataRep>(&base_)) return d->samples.get();
    return nullptr;
  }
  const DenseCov4* dense_cov() const {
    if (auto* d = std::get_if<DenseRep>(&base_)) return d->cov.get();
    return nullptr;
  }

  Matrix t2(const Matrix& w) const {
    if (w.rows() != k2_ || w.cols() != k2_) {
      throw ShapeError("pip_t2: weight must be k2 x k2 (" + std::to_string(k2_) + ")");
    }
    Matrix u = std::visit([&](const auto& rep) { return base_t2(rep, w); }, base_);
    for (const auto& c : subtracted_) u -= c.score * frob_inner(c.right, w) * c.left;
    if (asymmetry(w) <= 1e-10) u = symmetrized(u);
    return u;
  }

  Matrix t1(const Matrix& w) const {
    if (w.rows() != k1_ || w.cols() != k1_) {
      throw ShapeError("pip_t1: weight must be k1 x k1 (" + std::to_string(k1_) + ")");
    }
    Matrix v = std::visit([&](const auto& rep) { return base_t1(rep, w); }, base_);
    for (const auto& c : subtracted_) v -= c.score * frob_inner(c.left, w) * c.right;
    if (asymmetry(w) <= 1e-10) v = symmetrized(v);
    return v;
  }

 private:
  struct DenseRep {
    std::shared_ptr<const DenseCov4> cov;
    std::shared_ptr<const Matrix> rearranged;  // k1^2 x k2^2
  };
  struct DataRep {
    std::shared_ptr<const SampleSet> samples;
  };

  explicit CovView(DenseRep rep) : k1_(rep.cov->k1()), k2_(rep.cov->k2()), base_(std::move(rep)) {}
  explicit CovView(DataRep rep)
      : k1_(rep.samples->k1()), k2_(rep.samples->k2()), base_(std::move(rep)) {}

  Matrix base_t2(const DenseRep& rep, const Matrix& w) const {
    const Vector u = (*rep.rearranged) * vec_rowmajor(w);
    return unvec_rowmajor(u, k1_, k1_);
  }
  Matrix base_t1(const DenseRep& rep, const Matrix& w) const {
    const Vector v = rep.rearranged->transpose() * vec_rowmajor(w);
    return unvec_rowmajor(v, k2_, k2_);
  }

  // divisor^-1 sum_n X_n W X_n^T, accumulated in sample order.
  Matrix base_t2(const DataRep& rep, const Matrix& w) const {
    const SampleSet& s = *rep.samples;
    const Matrix xw = s.stacked() * w;  // block n is X_n W
    Matrix u = Matrix::Zero(k1_, k1_);
    for (std::size_t n = 0; n < s.size(); ++n) {
      const Index off = static_cast<Index>(n) * k1_;
      u.noalias() += xw.middleRows(off, k1_) * s.effective(n).transpose();
    }
    return u / s.divisor();
  }

  // divisor^-1 sum_n X_n^T W X_n = divisor^-1 S^T blockdiag(W) S for the stack S.
  Matrix base_t1(const DataRep& rep, const Matrix& w) const {
    const SampleSet& s = *rep.samples;
    Matrix wx(s.stacked().rows(), k2_);
    for (std::size_t n = 0; n < s.size(); ++n) {
      const Index off = static_cast<Index>(n) * k1_;
      wx.middleRows(off, k1_).noalias() = w * s.effective(n);
    }
    Matrix v = s.stacked().transpose() * wx;
    return v / s.divisor();
  }

  Index k1_ = 0;
  Index k2_ = 0;
  std::variant<DenseRep, DataRep> base_;
  std::vector<SepComponent> subtracted_;
};

inline Matrix pip_t2(const CovView& cov, const Matrix& w) { return cov.t2(w); }
inline Matrix pip_t1(const CovView& cov, const Matrix& w) { return cov.t1(w); }

/// How fit-time views are built from samples.
enum class ViewPolicy {
  kData,   // always contract on the samples
  kDense,  // always materialize the empirical covariance
  kAuto,   // materialize when that is cheaper and fits the memory budget
};

/// Largest dense operator (entries of the (k1 k2)^2 matrix) kAuto will build.
inline constexpr double kAutoDenseEntryLimit = 4.0e6;

/// Builds a view over the empirical covariance of `samples`.
///
/// A data-level contraction costs about N k1 k2 (k1 + k2) flops, the dense one
/// about 2 (k1 k2)^2, so kAuto goes dense when N (k1 + k2) >= 2 k1 k2.
inline CovView make_view(std::shared_ptr<const SampleSet> samples, ViewPolicy policy) {
  const double k1 = static_cast<double>(samples->k1());
  const double k2 = static_cast<double>(samples->k2());
  const double n = static_cast<double>(samples->size());
  bool dense = policy == ViewPolicy::kDense;
  if (policy == ViewPolicy::kAuto) {
    dense = n * (k1 + k2) >= 2.0 * k1 * k2 && (k1 * k2) * (k1 * k2) <= kAutoDenseEntryLimit;
  }
  if (dense) return CovView::dense(empirical_cov_unguarded(*samples));
  return CovView::data(std::move(samples));
}

}  // namespace psca
