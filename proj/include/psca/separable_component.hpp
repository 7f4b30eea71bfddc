#pragma once

#include <cmath>
#include <string>

#include "psca/tensor_core.hpp"

namespace psca {

/// One term sigma * A ~x B of a separable component decomposition.
///
/// Fitted components have unit-norm symmetric factors, a non-negative score
/// and satisfy the joint sign rule. Restricted operators (see predictor.hpp)
/// reuse the type with unnormalized factors.
struct SepComponent {
  double score = 0.0;
  Matrix left;   // k1 x k1
  Matrix right;  // k2 x k2
};

/// Checks the fitted-component invariants; returns an empty string when they
/// hold, otherwise a description of the first violation.
inline std::string check_component(const SepComponent& c) {
  if (!(c.score >= 0.0) || !std::isfinite(c.score)) return "score must be finite and non-negative";
  if (c.left.rows() != c.left.cols() || c.right.rows() != c.right.cols()) {
    return "factors must be square";
  }
  if (std::abs(c.left.norm() - 1.0) > 1e-10) return "left factor is not unit norm";
  if (std::abs(c.right.norm() - 1.0) > 1e-10) return "right factor is not unit norm";
  if (asymmetry(c.left) > 1e-8) return "left factor is not symmetric";
  if (asymmetry(c.right) > 1e-8) return "right factor is not symmetric";
  Matrix a = c.left, b = c.right;
  if (apply_sign_rule(a, b)) return "sign rule violated";
  return {};
}

/// (A ~x B) X = A X B^T, which is A X B for the symmetric factors used throughout.
inline Matrix apply_separable(const Matrix& a, const Matrix& x, const Matrix& b) {
  return a * x * b.transpose();
}

}  // namespace psca
