#pragma once

// Desk-scale simulation studies: Gneiting error curves with bias asymptotes,
// score-decay convergence, PCG iteration counts, and cross-validation against
// the oracle choice of R.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "psca/errors.hpp"
#include "psca/io.hpp"
#include "psca/model_select.hpp"
#include "psca/pip.hpp"
#include "psca/random.hpp"
#include "psca/rsep_operator.hpp"
#include "psca/sample_set.hpp"
#include "psca/scd_fit.hpp"
#include "psca/simulate.hpp"
#include "psca/solver.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

/// Tabular study output plus a JSON summary.
struct ExperimentReport {
  std::string study;
  json config;
  int replications = 0;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  json summary;

  std::string to_csv() const {
    std::ostringstream out;
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << '\n';
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
      out << '\n';
    }
    return out.str();
  }

  json to_json() const {
    return json{{"study", study},     {"config", config},   {"replications", replications},
                {"columns", columns}, {"summary", summary}};
  }
};

// Statistics helpers ---------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Standard error of the mean.
inline double std_error(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

/// Average ranks (1-based), ties share their mean rank.
inline std::vector<double> ranks_of(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidArgument("spearman: length mismatch");
  return pearson(ranks_of(x), ranks_of(y));
}

/// sqrt(sum_{s>r} sigma_s^2) / sqrt(sum_s sigma_s^2) for a full score list.
inline double bias_asymptote(const std::vector<double>& scores, std::size_t r) {
  double total = 0.0, tail = 0.0;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    total += scores[s] * scores[s];
    if (s >= r) tail += scores[s] * scores[s];
  }
  return total > 0.0 ? std::sqrt(tail / total) : 0.0;
}

namespace detail {

/// Relative Frobenius errors ||C_r - C|| / ||C|| of the truncations r = 1..R of
/// `est` against an explicit truth, through the rearranged truth.
inline std::vector<double> truncation_errors(const ScdEstimate& est, const Matrix& truth_rearranged,
                                             double truth_norm2) {
  std::vector<double> out;
  double cross = 0.0;
  for (std::size_t r = 0; r < est.size(); ++r) {
    const auto& c = est.components[r];
    cross += c.score * vec_rowmajor(c.left).dot(truth_rearranged * vec_rowmajor(c.right));
    const double norm2 = est.truncated(r + 1).squared_norm();
    const double err2 = std::max(truth_norm2 - 2.0 * cross + norm2, 0.0);
    out.push_back(std::sqrt(err2 / truth_norm2));
  }
  return out;
}

inline std::uint64_t cell_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  return derive_seed(root, path);
}

}  // namespace detail

// Gneiting study -------------------------------------------------------------

struct GneitingStudyConfig {
  Index k = 20;
  std::vector<std::size_t> n_values{64, 256, 1024, 2048};
  std::vector<Index> r_values{1, 2, 3};
  int seeds = 10;
  std::uint64_t root_seed = 0;
  GneitingParams params;
  double fit_tol = 1e-10;
  int fit_max_iter = 1000;
  Index oracle_guard = 64;
};

struct GneitingStudyResult {
  GneitingStudyConfig config;
  std::vector<double> truth_scores;   // full SCD of the truth
  std::vector<double> bias;           // per r_values entry
  // [n index][seed] errors: per r (in r_values order) and of the empirical estimator.
  std::vector<std::vector<std::vector<double>>> errors;
  std::vector<std::vector<double>> empirical_errors;

  double mean_error(std::size_t ni, std::size_t ri) const {
    std::vector<double> v;
    for (const auto& s : errors[ni]) v.push_back(s[ri]);
    return mean_of(v);
  }
  double mean_empirical_error(std::size_t ni) const { return mean_of(empirical_errors[ni]); }

  ExperimentReport report() const {
    ExperimentReport rep;
    rep.study = "gneiting";
    rep.config = {{"k", config.k},
                  {"n_values", config.n_values},
                  {"r_values", config.r_values},
                  {"seeds", config.seeds},
                  {"root_seed", config.root_seed},
                  {"beta", config.params.beta},
                  {"domain_scale", config.params.domain_scale}};
    rep.replications = config.seeds;
    rep.columns = {"n", "r", "mean_relative_error", "std_error", "bias_asymptote", "excess"};
    for (std::size_t ni = 0; ni < config.n_values.size(); ++ni) {
      const double n = static_cast<double>(config.n_values[ni]);
      rep.rows.push_back({n, 0.0, mean_empirical_error(ni), std_error(empirical_errors[ni]), 0.0,
                          mean_empirical_error(ni)});
      for (std::size_t ri = 0; ri < config.r_values.size(); ++ri) {
        std::vector<double> v;
        for (const auto& s : errors[ni]) v.push_back(s[ri]);
        rep.rows.push_back({n, static_cast<double>(config.r_values[ri]), mean_of(v), std_error(v),
                            bias[ri], mean_of(v) - bias[ri]});
      }
    }
    rep.summary = {{"truth_scores_leading",
                    std::vector<double>(truth_scores.begin(),
                                        truth_scores.begin() +
                                            static_cast<long>(std::min<std::size_t>(10, truth_scores.size())))},
                   {"bias_asymptotes", bias},
                   {"note", "r = 0 rows are the empirical covariance"}};
    return rep;
  }
};

inline GneitingStudyResult run_gneiting_study(const GneitingStudyConfig& cfg) {
  if (cfg.k > cfg.oracle_guard) throw OracleSizeError("gneiting study: k exceeds the oracle guard");
  if (cfg.r_values.empty() || cfg.n_values.empty() || cfg.seeds < 1) {
    throw InvalidArgument("gneiting study: empty configuration");
  }
  GneitingStudyResult res;
  res.config = cfg;
  const DenseCov4 truth = gneiting_dense(cfg.params, cfg.k, cfg.k);
  const Matrix truth_op = truth.as_operator();
  const Matrix truth_re = rearrange(truth);
  const double truth_norm2 = truth_op.squaredNorm();
  res.truth_scores = brute_force_scd(truth, cfg.oracle_guard).scores;
  for (Index r : cfg.r_values) res.bias.push_back(bias_asymptote(res.truth_scores, static_cast<std::size_t>(r)));

  const DenseSampler sampler(truth);
  const Index r_max = *std::max_element(cfg.r_values.begin(), cfg.r_values.end());
  FitOptions fo;
  fo.r = r_max;
  fo.tol = cfg.fit_tol;
  fo.max_iter = cfg.fit_max_iter;
  for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
    std::vector<std::vector<double>> per_seed;
    std::vector<double> emp;
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = detail::cell_seed(cfg.root_seed, {cfg.n_values[ni], static_cast<std::uint64_t>(s)});
      auto data = std::make_shared<const SampleSet>(sampler.draw(cfg.n_values[ni], seed));
      const DenseCov4 emp_cov = empirical_cov_unguarded(*data);
      emp.push_back((emp_cov.as_operator() - truth_op).norm() / std::sqrt(truth_norm2));
      fo.seed = seed;
      const ScdEstimate est = fit(CovView::dense(emp_cov), fo);
      const std::vector<double> errs = detail::truncation_errors(est, truth_re, truth_norm2);
      std::vector<double> row;
      for (Index r : cfg.r_values) row.push_back(errs[static_cast<std::size_t>(r - 1)]);
      per_seed.push_back(std::move(row));
    }
    res.errors.push_back(std::move(per_seed));
    res.empirical_errors.push_back(std::move(emp));
  }
  return res;
}

// Score-decay study ----------------------------------------------------------

struct DecayStudyConfig {
  Index k = 10;
  Index r_true = 4;
  std::vector<double> alphas{1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  std::vector<std::size_t> n_values{64, 128, 256, 512, 1024};
  std::vector<Index> r_fit{2, 3};
  int seeds = 10;
  std::uint64_t root_seed = 0;
  double fit_tol = 1e-10;
  int fit_max_iter = 1000;
};

struct DecayCell {
  double alpha = 0.0;
  std::size_t n = 0;
  Index r_fit = 0;
  std::vector<double> excess;  // relative error minus bias, per seed
  double bias = 0.0;
};

struct DecayStudyResult {
  DecayStudyConfig config;
  std::vector<DecayCell> cells;

  const DecayCell& cell(double alpha, std::size_t n, Index r_fit) const {
    for (const auto& c : cells)
      if (c.alpha == alpha && c.n == n && c.r_fit == r_fit) return c;
    throw InvalidArgument("decay study: no such cell");
  }

  ExperimentReport report() const {
    ExperimentReport rep;
    rep.study = "decay";
    rep.config = {{"k", config.k},         {"r_true", config.r_true}, {"alphas", config.alphas},
                  {"n_values", config.n_values}, {"r_fit", config.r_fit}, {"seeds", config.seeds},
                  {"root_seed", config.root_seed}};
    rep.replications = config.seeds;
    rep.columns = {"alpha", "n", "r_fit", "mean_excess_error", "std_error", "bias_asymptote"};
    for (const auto& c : cells) {
      rep.rows.push_back({c.alpha, static_cast<double>(c.n), static_cast<double>(c.r_fit),
                          mean_of(c.excess), std_error(c.excess), c.bias});
    }
    rep.summary = {{"cells", cells.size()}, {"score_normalization", "sum_one"}};
    return rep;
  }
};

inline DecayStudyResult run_decay_study(const DecayStudyConfig& cfg) {
  if (cfg.k > 64) throw OracleSizeError("decay study: k exceeds the oracle guard");
  DecayStudyResult res;
  res.config = cfg;
  for (double alpha : cfg.alphas) {
    for (std::size_t n : cfg.n_values) {
      for (Index rf : cfg.r_fit) {
        DecayCell cell;
        cell.alpha = alpha;
        cell.n = n;
        cell.r_fit = rf;
        for (int s = 0; s < cfg.seeds; ++s) {
          RandomCovSpec spec;
          spec.kind = RandomCovKind::kOrthoBlocks;
          spec.r = cfg.r_true;
          spec.k1 = cfg.k;
          spec.seed = detail::cell_seed(cfg.root_seed, {0xdeca, static_cast<std::uint64_t>(s)});
          spec.score_rule = ScoreRule::kPolyDecay;
          spec.decay_alpha = alpha;
          spec.normalization = ScoreNormalization::kSumOne;
          const ScdEstimate truth = random_rsep(spec);
          const DenseCov4 truth_dense = reconstruct_dense(truth, 64);
          const Matrix truth_re = rearrange(truth_dense);
          const double truth_norm2 = truth_dense.as_operator().squaredNorm();
          cell.bias = bias_asymptote(truth.scores(), static_cast<std::size_t>(rf));

          const std::uint64_t seed = detail::cell_seed(cfg.root_seed, {n, static_cast<std::uint64_t>(s), 7});
          auto data = std::make_shared<const SampleSet>(sample_gaussian(truth, n, seed));
          FitOptions fo;
          fo.r = rf;
          fo.tol = cfg.fit_tol;
          fo.max_iter = cfg.fit_max_iter;
          fo.seed = seed;
          const ScdEstimate est = fit(make_view(data, ViewPolicy::kAuto), fo);
          const auto errs = detail::truncation_errors(est, truth_re, truth_norm2);
          cell.excess.push_back(errs.back() - cell.bias);
        }
        res.cells.push_back(std::move(cell));
      }
    }
  }
  return res;
}

// Inversion study ------------------------------------------------------------

struct InversionStudyConfig {
  std::vector<Index> k_values{10, 20, 40};
  std::vector<double> kappas{10.0, 100.0, 1000.0};
  int seeds = 10;
  std::uint64_t root_seed = 0;
  Index r = 5;
  std::size_t n = 500;
  double fit_tol = 1e-7;
  int fit_max_iter = 500;
  double pcg_tol = 1e-10;
  // Dominance sweep.
  bool dominance = true;
  Index dominance_k = 20;
  std::vector<Index> dominance_r{3, 5, 7};
  std::vector<double> sigma1_grid{0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};
  std::vector<double> epsilons{1e-4, 1e-3, 1e-2};
};

struct InversionCell {
  Index k = 0;
  double kappa = 0.0;
  int seed = 0;
  int iterations = 0;
  double max_abs_error = 0.0;
  double shift = 0.0;
  bool converged = false;
};

struct DominanceCell {
  Index r = 0;
  double epsilon = 0.0;
  double sigma1 = 0.0;
  int seed = 0;
  int iterations = 0;
  double max_abs_error = 0.0;
  bool converged = false;
};

struct InversionStudyResult {
  InversionStudyConfig config;
  std::vector<InversionCell> cells;
  std::vector<DominanceCell> dominance;

  double median_iterations(Index k, double kappa) const {
    std::vector<double> v;
    for (const auto& c : cells)
      if (c.k == k && c.kappa == kappa) v.push_back(c.iterations);
    return median_of(v);
  }

  double max_abs_error() const {
    double m = 0.0;
    for (const auto& c : cells) m = std::max(m, c.max_abs_error);
    return m;
  }

  /// Spearman correlation between sigma_1 and iterations at one epsilon, pooled
  /// over R and seeds.
  double dominance_spearman(double epsilon) const {
    std::vector<double> s, it;
    for (const auto& c : dominance) {
      if (c.epsilon != epsilon) continue;
      s.push_back(c.sigma1);
      it.push_back(c.iterations);
    }
    return spearman(s, it);
  }

  ExperimentReport report() const {
    ExperimentReport rep;
    rep.study = "inversion";
    rep.config = {{"k_values", config.k_values}, {"kappas", config.kappas},   {"seeds", config.seeds},
                  {"root_seed", config.root_seed}, {"r", config.r},         {"n", config.n},
                  {"pcg_tol", config.pcg_tol},   {"dominance_k", config.dominance_k},
                  {"dominance_r", config.dominance_r}, {"epsilons", config.epsilons}};
    rep.replications = config.seeds;
    rep.columns = {"kind", "k", "kappa_or_epsilon", "r", "sigma1", "seed", "iterations", "max_abs_error",
                   "converged"};
    for (const auto& c : cells) {
      rep.rows.push_back({0.0, static_cast<double>(c.k), c.kappa, static_cast<double>(config.r), 0.0,
                          static_cast<double>(c.seed), static_cast<double>(c.iterations), c.max_abs_error,
                          c.converged ? 1.0 : 0.0});
    }
    for (const auto& c : dominance) {
      rep.rows.push_back({1.0, static_cast<double>(config.dominance_k), c.epsilon, static_cast<double>(c.r),
                          c.sigma1, static_cast<double>(c.seed), static_cast<double>(c.iterations),
                          c.max_abs_error, c.converged ? 1.0 : 0.0});
    }
    json med = json::array();
    for (Index k : config.k_values)
      for (double kappa : config.kappas)
        med.push_back({{"k", k}, {"kappa", kappa}, {"median_iterations", median_iterations(k, kappa)}});
    json sp = json::array();
    if (config.dominance)
      for (double e : config.epsilons) sp.push_back({{"epsilon", e}, {"spearman", dominance_spearman(e)}});
    rep.summary = {{"median_iterations", med},
                   {"max_abs_error", max_abs_error()},
                   {"dominance_spearman", sp},
                   {"note", "kind 0 rows: fixed condition number; kind 1 rows: dominance sweep"}};
    return rep;
  }
};

namespace detail {

/// R-separable estimate fitted to N samples of a smooth random covariance with
/// unit scores.
inline ScdEstimate inversion_estimate(Index k, Index r, std::size_t n, std::uint64_t seed,
                                      double tol, int max_iter) {
  RandomCovSpec spec;
  spec.kind = RandomCovKind::kSmoothEigen;
  spec.r = r;
  spec.k1 = k;
  spec.seed = derive_seed(seed, {1});
  spec.score_rule = ScoreRule::kExplicit;
  const ScdEstimate truth = random_rsep(spec);
  auto data = std::make_shared<const SampleSet>(sample_gaussian(truth, n, derive_seed(seed, {2})));
  FitOptions fo;
  fo.r = r;
  fo.tol = tol;
  fo.max_iter = max_iter;
  fo.seed = seed;
  return fit(make_view(data, ViewPolicy::kAuto), fo);
}

struct Recovery {
  int iterations = 0;
  double max_abs_error = 0.0;
  bool converged = false;
};

inline Recovery recover(const RSepOperator& op, std::uint64_t seed, double tol) {
  Rng rng(seed);
  const Matrix x = normal_matrix(op.k1, op.k2, rng);
  const Matrix y = apply(op, x);
  SolveOptions so;
  so.tol = tol;
  so.stop = StopRule::kIterateDistance;
  so.max_iter = static_cast<int>(10 * op.k1 * op.k2);
  auto [sol, rep] = pcg_solve(op, y, so);
  return {rep.iterations, (sol - x).cwiseAbs().maxCoeff(), rep.converged};
}

/// Scores with the given leading value, the rest uniform on the interval that
/// keeps them below sigma_1 and the total at one.
inline std::vector<double> dominance_scores(double sigma1, Index r, Rng& rng) {
  std::vector<double> s{sigma1};
  double sum = sigma1;
  for (Index q = 2; q <= r; ++q) {
    const double lo = std::max(0.0, 1.0 - sum - static_cast<double>(r - q) * sigma1);
    const double hi = std::min(sigma1, 1.0 - sum);
    const double v = lo < hi ? std::uniform_real_distribution<double>(lo, hi)(rng) : lo;
    s.push_back(v);
    sum += v;
  }
  return s;
}

}  // namespace detail

/// Shift (epsilon - lambda_min) with epsilon = (lambda_max - lambda_min) / (kappa - 1),
/// so op + shift I has extreme eigenvalues epsilon and kappa epsilon. The shift
/// is negative when op is already better conditioned than kappa.
inline double kappa_shift(const EigenBounds& eb, double kappa) {
  if (!(kappa > 1.0)) throw InvalidArgument("kappa must exceed 1");
  if (!(eb.lambda_max > eb.lambda_min)) throw NumericalError("kappa_shift: flat spectrum");
  const double eps = (eb.lambda_max - eb.lambda_min) / (kappa - 1.0);
  return eps - eb.lambda_min;
}

inline InversionStudyResult run_inversion_study(const InversionStudyConfig& cfg) {
  for (double kappa : cfg.kappas) {
    if (!(kappa >= 1.0)) throw InvalidArgument("inversion study: kappa must be >= 1");
  }
  InversionStudyResult res;
  res.config = cfg;
  for (Index k : cfg.k_values) {
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = detail::cell_seed(cfg.root_seed, {0x1a7, static_cast<std::uint64_t>(k),
                                                                   static_cast<std::uint64_t>(s)});
      const ScdEstimate est = detail::inversion_estimate(k, cfg.r, cfg.n, seed, cfg.fit_tol, cfg.fit_max_iter);
      const RSepOperator base = RSepOperator::from_estimate(est);
      const EigenBounds eb = extremal_eigen(base, 1e-10, 0, seed);
      for (double kappa : cfg.kappas) {
        RSepOperator op = base;
        InversionCell cell;
        cell.k = k;
        cell.kappa = kappa;
        cell.seed = s;
        cell.shift = kappa_shift(eb, kappa);
        op.ridge = cell.shift;
        const auto rec = detail::recover(op, derive_seed(seed, {static_cast<std::uint64_t>(kappa)}), cfg.pcg_tol);
        cell.iterations = rec.iterations;
        cell.max_abs_error = rec.max_abs_error;
        cell.converged = rec.converged;
        res.cells.push_back(cell);
      }
    }
  }
  if (!cfg.dominance) return res;
  for (Index r : cfg.dominance_r) {
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = detail::cell_seed(cfg.root_seed, {0xd0, static_cast<std::uint64_t>(r),
                                                                   static_cast<std::uint64_t>(s)});
      const ScdEstimate est =
          detail::inversion_estimate(cfg.dominance_k, r, cfg.n, seed, cfg.fit_tol, cfg.fit_max_iter);
      // One ridge per sweep: epsilon plus the largest positivizing shift any
      // sigma_1 needs, so that only the scores vary along the sweep.
      std::vector<std::pair<double, RSepOperator>> sweep;
      double worst = 0.0;
      for (double sigma1 : cfg.sigma1_grid) {
        if (sigma1 * static_cast<double>(r) < 1.0 - 1e-12) continue;
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(std::llround(sigma1 * 100))}));
        const std::vector<double> scores = detail::dominance_scores(sigma1, r, rng);
        RSepOperator op = RSepOperator::from_estimate(est);
        for (std::size_t q = 0; q < op.components.size(); ++q) op.components[q].score = scores[q];
        const EigenBounds eb = extremal_eigen(op, 1e-10, 0, seed);
        worst = std::max(worst, eb.residual_min - eb.lambda_min);
        sweep.emplace_back(sigma1, std::move(op));
      }
      for (const auto& [sigma1, op] : sweep) {
        for (double eps : cfg.epsilons) {
          RSepOperator shifted = op;
          shifted.ridge = eps + worst;
          const auto rec = detail::recover(shifted, derive_seed(seed, {0xe, static_cast<std::uint64_t>(std::llround(sigma1 * 100))}),
                                           cfg.pcg_tol);
          res.dominance.push_back({r, eps, sigma1, s, rec.iterations, rec.max_abs_error, rec.converged});
        }
      }
    }
  }
  return res;
}

// Cross-validation study -----------------------------------------------------

struct CvStudyConfig {
  Index k = 8;
  std::vector<std::size_t> n_values{100, 400, 1600};
  int seeds = 10;
  std::uint64_t root_seed = 0;
  double score_ratio = 0.3;  // sigma_2 / sigma_1 of the 2-separable truth
  Index r_max = 4;
  int folds = 10;
  bool prediction = true;
  int patterns_per_sample = 3;
};

struct CvStudyCell {
  std::size_t n = 0;
  int seed = 0;
  std::vector<double> errors;  // relative error of the full-data fit truncated at r = 1..r_max
  Index chosen_frobenius = 0;
  Index chosen_prediction = 0;

  double oracle_min() const { return *std::min_element(errors.begin(), errors.end()); }
  double error_at(Index r) const { return errors[static_cast<std::size_t>(r - 1)]; }
};

struct CvStudyResult {
  CvStudyConfig config;
  std::vector<CvStudyCell> cells;

  /// Seeds at `n` whose chosen r attains an error within (1 + slack) of the oracle.
  int hits(std::size_t n, bool prediction, double slack) const {
    int h = 0;
    for (const auto& c : cells) {
      if (c.n != n) continue;
      const Index r = prediction ? c.chosen_prediction : c.chosen_frobenius;
      if (r > 0 && c.error_at(r) <= (1.0 + slack) * c.oracle_min()) ++h;
    }
    return h;
  }

  ExperimentReport report() const {
    ExperimentReport rep;
    rep.study = "cv";
    rep.config = {{"k", config.k},         {"n_values", config.n_values}, {"seeds", config.seeds},
                  {"root_seed", config.root_seed}, {"score_ratio", config.score_ratio},
                  {"r_max", config.r_max}, {"folds", config.folds},
                  {"patterns_per_sample", config.patterns_per_sample}};
    rep.replications = config.seeds;
    rep.columns = {"n", "seed", "chosen_frobenius", "chosen_prediction", "oracle_min_error",
                   "frobenius_error", "prediction_error"};
    for (const auto& c : cells) {
      rep.rows.push_back({static_cast<double>(c.n), static_cast<double>(c.seed),
                          static_cast<double>(c.chosen_frobenius), static_cast<double>(c.chosen_prediction),
                          c.oracle_min(), c.error_at(c.chosen_frobenius),
                          c.chosen_prediction > 0 ? c.error_at(c.chosen_prediction) : 0.0});
    }
    json per_n = json::array();
    for (auto n : config.n_values) {
      per_n.push_back({{"n", n},
                       {"frobenius_within_10pct", hits(n, false, 0.10)},
                       {"prediction_within_20pct", hits(n, true, 0.20)}});
    }
    rep.summary = {{"per_n", per_n}};
    return rep;
  }
};

/// Exactly 2-separable truth with orthogonal block factors and scores (1, ratio).
inline ScdEstimate two_separable_truth(Index k, double ratio, std::uint64_t seed) {
  RandomCovSpec spec;
  spec.kind = RandomCovKind::kOrthoBlocks;
  spec.r = 2;
  spec.k1 = k;
  spec.seed = seed;
  spec.score_rule = ScoreRule::kExplicit;
  spec.scores = {1.0, ratio};
  return random_rsep(spec);
}

inline CvStudyResult run_cv_study(const CvStudyConfig& cfg) {
  if (cfg.k > 64) throw OracleSizeError("cv study: k exceeds the oracle guard");
  CvStudyResult res;
  res.config = cfg;
  for (std::size_t n : cfg.n_values) {
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = detail::cell_seed(cfg.root_seed, {0xc5, n, static_cast<std::uint64_t>(s)});
      const ScdEstimate truth = two_separable_truth(cfg.k, cfg.score_ratio, derive_seed(seed, {1}));
      const DenseCov4 truth_dense = reconstruct_dense(truth, 64);
      const Matrix truth_re = rearrange(truth_dense);
      const double truth_norm2 = truth_dense.as_operator().squaredNorm();
      const SampleSet data = sample_gaussian(truth, n, derive_seed(seed, {2}));

      CvOptions co;
      co.r_max = cfg.r_max;
      co.folds = cfg.folds;
      co.seed = derive_seed(seed, {3});
      co.patterns_per_sample = cfg.patterns_per_sample;
      const ScdEstimate full = detail::fit_samples(data, co);
      CvStudyCell cell;
      cell.n = n;
      cell.seed = s;
      cell.errors = detail::truncation_errors(full, truth_re, truth_norm2);
      cell.chosen_frobenius = cv_frobenius(data, co).chosen_r;
      if (cfg.prediction) cell.chosen_prediction = cv_prediction(data, co).chosen_r;
      res.cells.push_back(std::move(cell));
    }
  }
  return res;
}

}  // namespace psca
