#pragma once

// Choosing the degree of separability: K-fold cross-validation of the
// Frobenius risk, prediction-based cross-validation, and scree data.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "psca/errors.hpp"
#include "psca/pip.hpp"
#include "psca/predictor.hpp"
#include "psca/random.hpp"
#include "psca/rsep_operator.hpp"
#include "psca/sample_set.hpp"
#include "psca/scd_fit.hpp"
#include "psca/solver.hpp"

namespace psca {

struct CvOptions {
  Index r_max = 3;
  int folds = 10;
  std::uint64_t seed = 0;
  int patterns_per_sample = 1;
  /// Prediction CV only: hold out arbitrary entries (each with probability
  /// 1/2) instead of whole rows and columns.
  bool arbitrary_patterns = false;
  double fit_tol = 1e-10;
  int fit_max_iter = 1000;
  ViewPolicy view = ViewPolicy::kAuto;
};

struct CvCurve {
  std::vector<Index> r_values;
  std::vector<double> objective;
  Index chosen_r = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void validate_cv(const SampleSet& data, const CvOptions& opts) {
  if (opts.folds < 2 || static_cast<std::size_t>(opts.folds) > data.size()) {
    throw InvalidArgument("cv: folds must satisfy 2 <= folds <= N");
  }
  if (opts.r_max < 1 || opts.r_max > std::min(data.k1() * data.k1(), data.k2() * data.k2())) {
    throw InvalidArgument("cv: r_max must satisfy 1 <= r_max <= min(k1^2, k2^2)");
  }
  if (opts.patterns_per_sample < 1) throw InvalidArgument("cv: patterns_per_sample must be >= 1");
}

/// Samples shuffled by the seed and dealt round-robin into folds.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int folds,
                                                        std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {0xf01d}));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < n; ++i) out[i % out.size()].push_back(order[i]);
  for (auto& f : out) {
    if (f.empty()) throw InvalidArgument("cv: a fold has no samples");
    std::sort(f.begin(), f.end());
  }
  return out;
}

inline std::vector<std::size_t> complement_of(const std::vector<std::size_t>& fold, std::size_t n) {
  std::vector<bool> held(n, false);
  for (auto i : fold) held[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!held[i]) out.push_back(i);
  return out;
}

inline FitOptions cv_fit_options(const CvOptions& opts) {
  FitOptions f;
  f.r = opts.r_max;
  f.tol = opts.fit_tol;
  f.max_iter = opts.fit_max_iter;
  f.seed = opts.seed;
  return f;
}

inline ScdEstimate fit_samples(const SampleSet& s, const CvOptions& opts) {
  return fit(make_view(std::make_shared<const SampleSet>(s), opts.view), cv_fit_options(opts));
}

inline void append_warnings(CvCurve& curve, const ScdEstimate& est, const std::string& where) {
  for (const auto& w : est.diagnostics.warnings) curve.warnings.push_back(where + ": " + w);
}

/// First index of the minimum; ties go to the smaller r.
inline void choose(CvCurve& curve) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.objective.size(); ++i) {
    if (curve.objective[i] < curve.objective[best]) best = i;
  }
  curve.chosen_r = curve.r_values[best];
}

}  // namespace detail

/// objective(r) = ||C_r||_F^2 - (2/N) sum_l sum_{j in fold l} <X_j, C_r^(-l) X_j>
/// where C_r is the full-data fit truncated at r, C_r^(-l) the fit without fold
/// l, and X_j is centered by the full-data mean. One fit at r_max per fold;
/// smaller r use its leading components.
inline CvCurve cv_frobenius(const SampleSet& data, const CvOptions& opts) {
  detail::validate_cv(data, opts);
  const std::size_t n = data.size();
  const auto r_max = static_cast<std::size_t>(opts.r_max);
  CvCurve curve;
  for (Index r = 1; r <= opts.r_max; ++r) curve.r_values.push_back(r);

  const ScdEstimate full = detail::fit_samples(data, opts);
  detail::append_warnings(curve, full, "full fit");

  std::vector<double> cross(r_max, 0.0);
  const auto folds = detail::make_folds(n, opts.folds, opts.seed);
  for (std::size_t l = 0; l < folds.size(); ++l) {
    const SampleSet train = data.subset(detail::complement_of(folds[l], n));
    const ScdEstimate est = detail::fit_samples(train, opts);
    detail::append_warnings(curve, est, "fold " + std::to_string(l + 1));
    for (auto j : folds[l]) {
      const Matrix x = data.centered() ? Matrix(data.raw(j) - data.mean()) : data.raw(j);
      double acc = 0.0;
      for (std::size_t r = 0; r < r_max; ++r) {
        if (r < est.size()) {
          const auto& c = est.components[r];
          acc += c.score * frob_inner(x, c.left * x * c.right.transpose());
        }
        cross[r] += acc;
      }
    }
  }
  for (std::size_t r = 0; r < r_max; ++r) {
    const double norm2 = full.truncated(r + 1).squared_norm();
    curve.objective.push_back(norm2 - 2.0 * cross[r] / static_cast<double>(n));
  }
  detail::choose(curve);
  return curve;
}

/// Hold-out pattern for prediction CV: each row and column (or, with
/// `arbitrary`, each entry) is held out with probability 1/2; patterns with no
/// observed entry are redrawn up to 100 times.
inline MissingPattern random_holdout(Index k1, Index k2, Rng& rng, bool arbitrary = false) {
  std::bernoulli_distribution coin(0.5);
  for (int attempt = 0; attempt < 100; ++attempt) {
    if (arbitrary) {
      Mask m(k1, k2);
      for (Index i = 0; i < k1; ++i)
        for (Index j = 0; j < k2; ++j) m(i, j) = !coin(rng);
      if (m.count() > 0) return MissingPattern::arbitrary(std::move(m));
      continue;
    }
    std::vector<Index> rows, cols;
    for (Index i = 0; i < k1; ++i)
      if (coin(rng)) rows.push_back(i);
    for (Index j = 0; j < k2; ++j)
      if (coin(rng)) cols.push_back(j);
    if (static_cast<Index>(rows.size()) < k1 && static_cast<Index>(cols.size()) < k2) {
      return MissingPattern::row_col(std::move(rows), std::move(cols));
    }
  }
  throw NumericalError("random_holdout: no pattern with observed entries after 100 draws");
}

/// Mean squared error of BLUP predictions of held-out entries. Each fold's fit
/// at r_max is truncated at r, positivized with epsilon = 1e-8 lambda_max, and
/// used to predict the held-out entries of every sample in the fold (around the
/// training mean when centering is on).
inline CvCurve cv_prediction(const SampleSet& data, const CvOptions& opts,
                             const SolveOptions& solve = {}) {
  detail::validate_cv(data, opts);
  const std::size_t n = data.size();
  const auto r_max = static_cast<std::size_t>(opts.r_max);
  const Index k1 = data.k1(), k2 = data.k2();
  CvCurve curve;
  for (Index r = 1; r <= opts.r_max; ++r) curve.r_values.push_back(r);

  std::vector<double> sq_err(r_max, 0.0);
  double held_entries = 0.0;
  int unconverged = 0;
  const auto folds = detail::make_folds(n, opts.folds, opts.seed);
  for (std::size_t l = 0; l < folds.size(); ++l) {
    const SampleSet train = data.subset(detail::complement_of(folds[l], n));
    const ScdEstimate est = detail::fit_samples(train, opts);
    detail::append_warnings(curve, est, "fold " + std::to_string(l + 1));
    const Matrix mean = data.centered() ? train.mean() : Matrix::Zero(k1, k2);

    std::vector<RSepOperator> ops;
    for (std::size_t r = 1; r <= r_max; ++r) {
      ops.push_back(positivize_relative(RSepOperator::from_estimate(est.truncated(r)), 1e-8,
                                        derive_seed(opts.seed, {0xe16, l, r})));
    }
    for (auto j : folds[l]) {
      const Matrix x = data.raw(j) - mean;
      for (int p = 0; p < opts.patterns_per_sample; ++p) {
        Rng rng(derive_seed(opts.seed, {0x7a7, j, static_cast<std::uint64_t>(p)}));
        const MissingPattern pat = random_holdout(k1, k2, rng, opts.arbitrary_patterns);
        const Mask obs = pat.observed_mask(k1, k2);
        const double missing = static_cast<double>(obs.size() - obs.count());
        if (missing == 0.0) continue;
        held_entries += missing;
        const Matrix x_obs = obs.select(x, Matrix::Zero(k1, k2));
        for (std::size_t r = 0; r < r_max; ++r) {
          const BlupResult res = blup_report(ops[r], x_obs, pat, solve);
          if (!res.solve.converged) ++unconverged;
          sq_err[r] += (res.prediction - x).squaredNorm();
        }
      }
    }
  }
  if (unconverged > 0) {
    curve.warnings.push_back(std::to_string(unconverged) +
                             " prediction solves stopped before reaching the tolerance");
  }
  if (held_entries == 0.0) throw NumericalError("cv_prediction: no entries were held out");
  for (std::size_t r = 0; r < r_max; ++r) curve.objective.push_back(sq_err[r] / held_entries);
  detail::choose(curve);
  return curve;
}

/// (r, sigma_r) pairs in fit order, scores non-increasing.
inline std::vector<std::pair<Index, double>> scree(const ScdEstimate& est) {
  std::vector<std::pair<Index, double>> out;
  for (std::size_t r = 0; r < est.size(); ++r) {
    out.emplace_back(static_cast<Index>(r + 1), est.components[r].score);
  }
  return out;
}

}  // namespace psca
