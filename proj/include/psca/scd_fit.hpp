#pragma once

// Power iteration with deflation for the leading separable components of a
// covariance, i.e. its best R-separable approximation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "psca/errors.hpp"
#include "psca/pip.hpp"
#include "psca/random.hpp"
#include "psca/separable_component.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

enum class InitPolicy {
  kAuto,             // identity for the first component, seeded random symmetric after
  kIdentity,         // identity for every component (random on restart)
  kRandomSymmetric,  // seeded random symmetric for every component
};

struct FitOptions {
  Index r = 1;
  double tol = 1e-10;
  int max_iter = 1000;
  InitPolicy init = InitPolicy::kAuto;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int restarts = 3;
};

struct FitDiagnostics {
  std::vector<int> iterations_per_component;
  std::vector<double> final_residual_per_component;  // ||A_k+1 - A_k||_F at stop
  std::vector<bool> converged_flags;
  std::vector<double> score_gaps;     // sigma_r - sigma_r+1, last entry is sigma_R - 0
  std::vector<double> score_changes;  // |sigma_k+1 - sigma_k| / sigma_k+1 at stop
  std::vector<std::string> warnings;

  bool all_converged() const {
    return std::all_of(converged_flags.begin(), converged_flags.end(), [](bool b) { return b; });
  }
};

/// sum_r sigma_r A_r ~x B_r with scores non-increasing.
struct ScdEstimate {
  Index k1 = 0;
  Index k2 = 0;
  std::vector<SepComponent> components;
  FitDiagnostics diagnostics;

  std::size_t size() const { return components.size(); }

  std::vector<double> scores() const {
    std::vector<double> s;
    s.reserve(components.size());
    for (const auto& c : components) s.push_back(c.score);
    return s;
  }

  /// Leading `r` components (all of them if r exceeds the count).
  ScdEstimate truncated(std::size_t r) const {
    ScdEstimate out;
    out.k1 = k1;
    out.k2 = k2;
    r = std::min(r, components.size());
    out.components.assign(components.begin(), components.begin() + static_cast<long>(r));
    const auto take = [r](auto v) {
      if (v.size() > r) v.resize(r);
      return v;
    };
    out.diagnostics.iterations_per_component = take(diagnostics.iterations_per_component);
    out.diagnostics.final_residual_per_component = take(diagnostics.final_residual_per_component);
    out.diagnostics.converged_flags = take(diagnostics.converged_flags);
    out.diagnostics.score_gaps = take(diagnostics.score_gaps);
    out.diagnostics.score_changes = take(diagnostics.score_changes);
    if (!out.diagnostics.score_gaps.empty()) out.diagnostics.score_gaps.back() = out.components.back().score;
    out.diagnostics.warnings = diagnostics.warnings;
    return out;
  }

  /// ||sum_r sigma_r A_r ~x B_r||_F^2 computed from the factor Gram matrices,
  /// exact even when the factors are not orthogonal.
  double squared_norm() const {
    double s = 0.0;
    for (const auto& a : components)
      for (const auto& b : components)
        s += a.score * b.score * frob_inner(a.left, b.left) * frob_inner(a.right, b.right);
    return s;
  }
};

struct ComponentFit {
  SepComponent component;
  int iterations = 0;
  double final_change = 0.0;
  double score_change = 0.0;
  bool converged = false;
};

namespace detail {

inline void validate_fit_options(const FitOptions& opts, Index k1, Index k2) {
  if (opts.r < 1) throw InvalidArgument("fit: r must be at least 1");
  if (opts.r > std::min(k1 * k1, k2 * k2)) {
    throw InvalidArgument("fit: r exceeds min(k1^2, k2^2)");
  }
  if (!(opts.tol > 0.0)) throw InvalidArgument("fit: tol must be positive");
  if (opts.max_iter < 1) throw InvalidArgument("fit: max_iter must be at least 1");
  if (opts.restarts < 0) throw InvalidArgument("fit: restarts must be non-negative");
}

inline Matrix identity_init(Index k) {
  return Matrix::Identity(k, k) / std::sqrt(static_cast<double>(k));
}

}  // namespace detail

/// Alternating partial inner products from `init_left`:
///   B <- T1(C, A) / ||.||,  A <- T2(C, B),  sigma <- ||A||,  A <- A / sigma
/// until ||A_new - A_old||_F < tol or max_iter sweeps. A PIP output with norm
/// at or below `zero_threshold` raises ZeroPipError.
inline ComponentFit fit_component(const CovView& cov, const Matrix& init_left,
                                  const FitOptions& opts, double zero_threshold = 0.0) {
  if (init_left.rows() != cov.k1() || init_left.cols() != cov.k1()) {
    throw ShapeError("fit_component: initial factor must be k1 x k1");
  }
  if (!(opts.tol > 0.0) || opts.max_iter < 1) throw InvalidArgument("fit_component: bad options");
  const double init_norm = init_left.norm();
  if (!(init_norm > 0.0) || !std::isfinite(init_norm)) {
    throw InvalidArgument("fit_component: initial factor must be nonzero and finite");
  }

  ComponentFit out;
  Matrix a = init_left / init_norm;
  Matrix b;
  double sigma = 0.0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    b = cov.t1(a);
    const double nb = b.norm();
    if (!std::isfinite(nb)) throw NumericalError("fit_component: non-finite partial inner product");
    if (nb <= zero_threshold) throw ZeroPipError("fit_component: T1 annihilated the iterate");
    b /= nb;

    Matrix a_next = cov.t2(b);
    const double s = a_next.norm();
    if (s <= zero_threshold) throw ZeroPipError("fit_component: T2 annihilated the iterate");
    a_next /= s;

    out.final_change = (a_next - a).norm();
    out.score_change = std::abs(s - sigma) / s;
    out.iterations = it;
    a = std::move(a_next);
    sigma = s;
    if (out.final_change < opts.tol) {
      out.converged = true;
      break;
    }
  }
  // The last B came from the previous A; refresh it so (A, B) is a matched pair.
  b = cov.t1(a);
  const double nb = b.norm();
  if (nb > zero_threshold && std::isfinite(nb)) b /= nb;

  apply_sign_rule(a, b);
  out.component = SepComponent{sigma, std::move(a), std::move(b)};
  return out;
}

/// Best R-separable approximation by successive power iterations on the
/// deflated covariance. Components come back sorted by score.
inline ScdEstimate fit(const CovView& cov, const FitOptions& opts) {
  const Index k1 = cov.k1(), k2 = cov.k2();
  detail::validate_fit_options(opts, k1, k2);

  std::vector<SepComponent> found;
  std::vector<ComponentFit> fits;
  std::vector<std::string> warnings;

  for (Index r = 0; r < opts.r; ++r) {
    const CovView residual = cov.deflated(found);
    const double zero_threshold = found.empty() ? 0.0 : 1e-12 * found.front().score;

    Matrix init;
    bool done = false;
    for (int attempt = 0; attempt <= opts.restarts && !done; ++attempt) {
      const bool identity =
          attempt == 0 && (opts.init == InitPolicy::kIdentity ||
                           (opts.init == InitPolicy::kAuto && r == 0));
      if (identity) {
        init = detail::identity_init(k1);
      } else {
        Rng rng(derive_seed(opts.seed, {static_cast<std::uint64_t>(r),
                                        static_cast<std::uint64_t>(attempt)}));
        init = random_symmetric_unit(k1, rng);
      }
      try {
        ComponentFit f = fit_component(residual, init, opts, zero_threshold);
        if (!f.converged) {
          warnings.push_back("component " + std::to_string(r + 1) + " hit max_iter=" +
                             std::to_string(opts.max_iter) + " (change " +
                             std::to_string(f.final_change) + ")");
        }
        found.push_back(f.component);
        fits.push_back(std::move(f));
        done = true;
      } catch (const ZeroPipError&) {
        if (r == 0 && attempt == opts.restarts) throw;
      }
    }
    if (!done) {
      // The residual vanishes (numerically) on every start: nothing left to extract.
      ComponentFit f;
      Matrix a = init, b = detail::identity_init(k2);
      apply_sign_rule(a, b);
      f.component = SepComponent{0.0, std::move(a), std::move(b)};
      f.converged = false;
      warnings.push_back("component " + std::to_string(r + 1) +
                         ": residual is numerically zero, score set to 0");
      found.push_back(f.component);
      fits.push_back(std::move(f));
    }
  }

  std::vector<std::size_t> order(fits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return fits[x].component.score > fits[y].component.score;
  });

  ScdEstimate est;
  est.k1 = k1;
  est.k2 = k2;
  for (auto idx : order) {
    const ComponentFit& f = fits[idx];
    est.components.push_back(f.component);
    est.diagnostics.iterations_per_component.push_back(f.iterations);
    est.diagnostics.final_residual_per_component.push_back(f.final_change);
    est.diagnostics.converged_flags.push_back(f.converged);
    est.diagnostics.score_changes.push_back(f.score_change);
  }
  for (std::size_t r = 0; r < est.components.size(); ++r) {
    const double next = r + 1 < est.components.size() ? est.components[r + 1].score : 0.0;
    est.diagnostics.score_gaps.push_back(est.components[r].score - next);
  }
  est.diagnostics.warnings = std::move(warnings);
  return est;
}

inline ScdEstimate fit(const SampleSet& data, const FitOptions& opts,
                       ViewPolicy policy = ViewPolicy::kData) {
  return fit(make_view(std::make_shared<const SampleSet>(data), policy), opts);
}

/// c[i,j,k,l] = sum_r sigma_r A_r[i,k] B_r[j,l]. Guarded like the other oracles.
inline DenseCov4 reconstruct_dense(const ScdEstimate& est, Index guard = kDefaultOracleGuard) {
  detail::check_oracle_guard(est.k1, est.k2, guard, "reconstruct_dense");
  Matrix m = Matrix::Zero(est.k1 * est.k1, est.k2 * est.k2);
  for (const auto& c : est.components) {
    m.noalias() += c.score * vec_rowmajor(c.left) * vec_rowmajor(c.right).transpose();
  }
  return unrearrange(m, est.k1, est.k2);
}

}  // namespace psca
