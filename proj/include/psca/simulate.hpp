#pragma once

// Ground-truth covariances for simulations and Gaussian sampling from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "psca/errors.hpp"
#include "psca/random.hpp"
#include "psca/sample_set.hpp"
#include "psca/scd_fit.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

/// Gneiting's space-time kernel
///   c = sigma2 / psi^tau * exp(-b^2 |s - s'|^(2 gamma) / psi^(beta gamma)),
///   psi = a^2 |t - t'|^(2 alpha) + 1,
/// on midpoint grids t_i = scale (i - 1/2) / k1, s_j = scale (j - 1/2) / k2.
struct GneitingParams {
  double sigma2 = 1.0;
  double a = 1.0;
  double b = 1.0;
  double alpha = 1.0;
  double beta = 0.7;
  double gamma = 1.0;
  double tau = 1.0;
  double domain_scale = 20.0;

  void validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw InvalidArgument("GneitingParams: beta must be in [0,1]");
    for (double v : {sigma2, a, b, alpha, gamma, tau, domain_scale}) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw InvalidArgument("GneitingParams: scale and shape parameters must be positive");
      }
    }
  }
};

inline double gneiting_kernel(const GneitingParams& p, double dt, double ds) {
  const double psi = p.a * p.a * std::pow(std::abs(dt), 2.0 * p.alpha) + 1.0;
  return p.sigma2 / std::pow(psi, p.tau) *
         std::exp(-p.b * p.b * std::pow(std::abs(ds), 2.0 * p.gamma) / std::pow(psi, p.beta * p.gamma));
}

inline DenseCov4 gneiting_dense(const GneitingParams& p, Index k1, Index k2) {
  p.validate();
  if (k1 <= 0 || k2 <= 0) throw InvalidArgument("gneiting_dense: grid sizes must be positive");
  const auto grid = [&](Index k) {
    Vector g(k);
    for (Index i = 0; i < k; ++i) g(i) = p.domain_scale * (static_cast<double>(i) + 0.5) / k;
    return g;
  };
  const Vector t = grid(k1), s = grid(k2);
  const Index n = k1 * k2;
  Matrix op(n, n);
  for (Index i = 0; i < k1; ++i)
    for (Index j = 0; j < k2; ++j)
      for (Index k = 0; k < k1; ++k)
        for (Index l = 0; l < k2; ++l)
          op(i * k2 + j, k * k2 + l) = gneiting_kernel(p, t(i) - t(k), s(j) - s(l));
  return DenseCov4::from_operator(symmetrized(op), k1, k2);
}

enum class RandomCovKind {
  kOrthoBlocks,  // disjoint eigenspaces of one random orthogonal basis per side
  kSmoothEigen,  // Brownian-motion leading factors, smooth random later factors
};

enum class ScoreRule {
  kExplicit,   // scores taken from RandomCovSpec::scores (all ones when empty)
  kPolyDecay,  // sigma_r = alpha^(R - r)
};

enum class ScoreNormalization { kNone, kSumOne, kFrobeniusOne };

struct RandomCovSpec {
  RandomCovKind kind = RandomCovKind::kOrthoBlocks;
  Index r = 1;
  Index k1 = 10;
  Index k2 = 0;  // 0 means k1
  std::uint64_t seed = 0;
  ScoreRule score_rule = ScoreRule::kPolyDecay;
  std::vector<double> scores;
  double decay_alpha = 1.0;
  ScoreNormalization normalization = ScoreNormalization::kNone;

  Index grid2() const { return k2 > 0 ? k2 : k1; }
};

namespace detail {

inline Matrix from_eigen(const Matrix& vectors, const Vector& values) {
  return vectors * values.asDiagonal() * vectors.transpose();
}

inline Matrix unit(const Matrix& m) { return symmetrized(m) / m.norm(); }

/// Factors for OrthoBlocks: block b of the columns of a random orthogonal
/// matrix carries eigenvalues m, m-1, ..., 1 where m is the block size.
inline std::vector<Matrix> ortho_block_factors(Index k, Index r, Rng& rng) {
  const Matrix q = random_orthogonal(k, rng);
  std::vector<Matrix> out;
  Index start = 0;
  for (Index b = 0; b < r; ++b) {
    const Index m = k / r + (b < k % r ? 1 : 0);
    Vector vals(m);
    for (Index i = 0; i < m; ++i) vals(i) = static_cast<double>(m - i);
    out.push_back(unit(from_eigen(q.middleCols(start, m), vals)));
    start += m;
  }
  return out;
}

/// Brownian-motion covariance min(t_i, t_j) on the grid t_i = i / k.
inline Matrix brownian_covariance(Index k) {
  Matrix m(k, k);
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) m(i, j) = static_cast<double>(std::min(i, j) + 1) / k;
  return m;
}

/// Smooth dictionary on midpoints of [0,1]: monomials up to degree 3, sines and
/// cosines of frequency 1 and 2, and quadratic B-spline bumps at 1/4, 1/2, 3/4.
inline Matrix smooth_dictionary(Index k) {
  constexpr double kPi = 3.14159265358979323846;
  std::vector<Vector> cols;
  Vector t(k);
  for (Index i = 0; i < k; ++i) t(i) = (static_cast<double>(i) + 0.5) / k;
  for (int d = 0; d <= 3; ++d) cols.push_back(t.array().pow(d).matrix());
  for (int f = 1; f <= 2; ++f) {
    cols.push_back((2.0 * kPi * f * t.array()).sin().matrix());
    cols.push_back((2.0 * kPi * f * t.array()).cos().matrix());
  }
  for (double c : {0.25, 0.5, 0.75}) {
    Vector v(k);
    for (Index i = 0; i < k; ++i) {
      const double u = std::abs(t(i) - c) / 0.25;  // support |u| < 1.5
      v(i) = u < 0.5 ? 0.75 - u * u : (u < 1.5 ? 0.5 * (1.5 - u) * (1.5 - u) : 0.0);
    }
    cols.push_back(v);
  }
  Matrix d(k, static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) d.col(static_cast<Index>(c)) = cols[c];
  return d;
}

/// A random number of dictionary functions, completed with random vectors and
/// orthogonalized into an eigenbasis; eigenvalues base^-(i-1) with a random base.
inline Matrix smooth_factor(Index k, Rng& rng) {
  const Matrix dict = smooth_dictionary(k);
  std::vector<Index> idx(static_cast<std::size_t>(dict.cols()));
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const Index max_take = std::min<Index>(dict.cols(), k);
  const Index take = std::uniform_int_distribution<Index>(1, max_take)(rng);

  Matrix basis(k, k);
  for (Index c = 0; c < take; ++c) basis.col(c) = dict.col(idx[static_cast<std::size_t>(c)]);
  basis.rightCols(k - take) = normal_matrix(k, k - take, rng);
  Eigen::HouseholderQR<Matrix> qr(basis);
  const Matrix q = qr.householderQ() * Matrix::Identity(k, k);

  const double base = std::uniform_real_distribution<double>(1.2, 3.0)(rng);
  Vector vals(k);
  for (Index i = 0; i < k; ++i) vals(i) = std::pow(base, -static_cast<double>(i));
  return unit(from_eigen(q, vals));
}

inline std::vector<double> spec_scores(const RandomCovSpec& spec) {
  std::vector<double> s;
  if (spec.score_rule == ScoreRule::kPolyDecay) {
    if (!(spec.decay_alpha > 0.0)) throw InvalidArgument("random_rsep: decay alpha must be positive");
    for (Index r = 1; r <= spec.r; ++r) s.push_back(std::pow(spec.decay_alpha, static_cast<double>(spec.r - r)));
  } else if (spec.scores.empty()) {
    s.assign(static_cast<std::size_t>(spec.r), 1.0);
  } else {
    if (static_cast<Index>(spec.scores.size()) != spec.r) {
      throw InvalidArgument("random_rsep: explicit score list must have r entries");
    }
    s = spec.scores;
  }
  for (double v : s) {
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument("random_rsep: scores must be positive");
  }
  return s;
}

}  // namespace detail

/// Random R-separable covariance with exactly known components.
inline ScdEstimate random_rsep(const RandomCovSpec& spec) {
  const Index k1 = spec.k1, k2 = spec.grid2();
  if (spec.r < 1) throw InvalidArgument("random_rsep: r must be at least 1");
  if (k1 < 1 || k2 < 1) throw InvalidArgument("random_rsep: grid sizes must be positive");
  const std::vector<double> scores = detail::spec_scores(spec);

  std::vector<Matrix> lefts, rights;
  if (spec.kind == RandomCovKind::kOrthoBlocks) {
    if (spec.r > std::min(k1, k2)) throw InvalidArgument("random_rsep: OrthoBlocks needs r <= k");
    Rng rl(derive_seed(spec.seed, {1})), rr(derive_seed(spec.seed, {2}));
    lefts = detail::ortho_block_factors(k1, spec.r, rl);
    rights = detail::ortho_block_factors(k2, spec.r, rr);
  } else {
    lefts.push_back(detail::unit(detail::brownian_covariance(k1)));
    rights.push_back(detail::unit(detail::brownian_covariance(k2)));
    for (Index r = 1; r < spec.r; ++r) {
      Rng rl(derive_seed(spec.seed, {1, static_cast<std::uint64_t>(r)}));
      Rng rr(derive_seed(spec.seed, {2, static_cast<std::uint64_t>(r)}));
      lefts.push_back(detail::smooth_factor(k1, rl));
      rights.push_back(detail::smooth_factor(k2, rr));
    }
  }

  ScdEstimate est;
  est.k1 = k1;
  est.k2 = k2;
  for (Index r = 0; r < spec.r; ++r) {
    Matrix a = lefts[static_cast<std::size_t>(r)], b = rights[static_cast<std::size_t>(r)];
    apply_sign_rule(a, b);
    est.components.push_back(SepComponent{scores[static_cast<std::size_t>(r)], std::move(a), std::move(b)});
  }
  std::stable_sort(est.components.begin(), est.components.end(),
                   [](const SepComponent& x, const SepComponent& y) { return x.score > y.score; });

  double scale = 1.0;
  if (spec.normalization == ScoreNormalization::kSumOne) {
    double sum = 0.0;
    for (const auto& c : est.components) sum += c.score;
    scale = 1.0 / sum;
  } else if (spec.normalization == ScoreNormalization::kFrobeniusOne) {
    scale = 1.0 / std::sqrt(est.squared_norm());
  }
  for (auto& c : est.components) c.score *= scale;

  for (std::size_t r = 0; r < est.components.size(); ++r) {
    const double next = r + 1 < est.components.size() ? est.components[r + 1].score : 0.0;
    est.diagnostics.score_gaps.push_back(est.components[r].score - next);
    est.diagnostics.iterations_per_component.push_back(0);
    est.diagnostics.final_residual_per_component.push_back(0.0);
    est.diagnostics.converged_flags.push_back(true);
    est.diagnostics.score_changes.push_back(0.0);
  }
  return est;
}

namespace detail {

/// Symmetric square root with eigenvalues in [-1e-10 lambda_max, 0) clipped to 0.
inline Matrix psd_sqrt(const Matrix& m, const char* what) {
  const SymmetricEigen e = sym_eigen(m);
  const double top = std::max(e.values.maxCoeff(), 0.0);
  if (e.values.minCoeff() < -1e-10 * top || (top == 0.0 && e.values.minCoeff() < 0.0)) {
    throw InvalidArgument(std::string(what) + ": factor is not positive semi-definite");
  }
  const Vector roots = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * roots.asDiagonal() * e.vectors.transpose();
}

}  // namespace detail

/// Matrix-variate Gaussian draws sum_r sqrt(sigma_r) L_r Z_r M_r^T with
/// L_r^2 = A_r, M_r^2 = B_r. Sample n, component r uses its own derived stream.
inline std::vector<Matrix> sample_gaussian_matrices(const ScdEstimate& truth, std::size_t n,
                                                    std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("sample_gaussian: n must be at least 1");
  std::vector<Matrix> lefts, rights;
  std::vector<double> roots;
  for (const auto& c : truth.components) {
    if (!(c.score >= 0.0)) throw InvalidArgument("sample_gaussian: negative score");
    lefts.push_back(detail::psd_sqrt(c.left, "sample_gaussian"));
    rights.push_back(detail::psd_sqrt(c.right, "sample_gaussian"));
    roots.push_back(std::sqrt(c.score));
  }
  std::vector<Matrix> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    Matrix x = Matrix::Zero(truth.k1, truth.k2);
    for (std::size_t r = 0; r < lefts.size(); ++r) {
      Rng rng(derive_seed(seed, {s, r}));
      const Matrix z = normal_matrix(truth.k1, truth.k2, rng);
      x.noalias() += roots[r] * (lefts[r] * z * rights[r].transpose());
    }
    out.push_back(std::move(x));
  }
  return out;
}

inline SampleSet sample_gaussian(const ScdEstimate& truth, std::size_t n, std::uint64_t seed,
                                 bool center = true) {
  return SampleSet(sample_gaussian_matrices(truth, n, seed), center);
}

/// Exact Gaussian draws from an explicit covariance via its eigendecomposition.
class DenseSampler {
 public:
  explicit DenseSampler(const DenseCov4& cov) : k1_(cov.k1()), k2_(cov.k2()) {
    root_ = detail::psd_sqrt(cov.as_operator(), "DenseSampler");
  }

  std::vector<Matrix> draw(std::size_t n, std::uint64_t seed) const {
    const Index d = k1_ * k2_;
    Matrix z(d, static_cast<Index>(n));
    for (std::size_t s = 0; s < n; ++s) {
      Rng rng(derive_seed(seed, {s}));
      z.col(static_cast<Index>(s)) = normal_matrix(d, 1, rng);
    }
    const Matrix x = root_ * z;
    std::vector<Matrix> out;
    out.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
      out.push_back(unvec_rowmajor(x.col(static_cast<Index>(s)), k1_, k2_));
    }
    return out;
  }

 private:
  Index k1_, k2_;
  Matrix root_;
};

inline SampleSet sample_dense_gaussian(const DenseCov4& cov, std::size_t n, std::uint64_t seed,
                                       bool center = true) {
  return SampleSet(DenseSampler(cov).draw(n, seed), center);
}

}  // namespace psca
