#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"

using namespace psca;

namespace {

SampleSet gaussian_set(Index k1, Index k2, std::size_t n, std::uint64_t seed, bool center = true) {
  std::mt19937_64 g(seed);
  return SampleSet(oracle::random_samples(k1, k2, n, g), center);
}

ScdEstimate separable_truth(Index k, std::uint64_t seed) {
  RandomCovSpec spec;
  spec.kind = RandomCovKind::kSmoothEigen;
  spec.r = 1;
  spec.k1 = k;
  spec.seed = seed;
  return random_rsep(spec);
}

double variance(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

// model-select --------------------------------------------------------------

TEST(CvFrobenius, LeaveOneOutMatchesDirectEvaluation) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Index k = 4;
    const std::size_t n = 8;
    std::mt19937_64 g(seed);
    const auto xs = oracle::random_samples(k, k, n, g);
    CvOptions co;
    co.r_max = 3;
    co.folds = static_cast<int>(n);
    co.fit_tol = 1e-14;
    co.fit_max_iter = 20000;
    const CvCurve curve = cv_frobenius(SampleSet(xs), co);

    Matrix mean = Matrix::Zero(k, k);
    for (const auto& x : xs) mean += x / static_cast<double>(n);
    const auto full = oracle::sym_scd(oracle::empirical_cov(xs, true), 3);
    std::vector<double> cross(3, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<Matrix> rest;
      for (std::size_t i = 0; i < n; ++i)
        if (i != j) rest.push_back(xs[i]);
      const auto loo = oracle::sym_scd(oracle::empirical_cov(rest, true), 3);
      const Matrix x = xs[j] - mean;
      double acc = 0.0;
      for (std::size_t r = 0; r < 3; ++r) {
        acc += loo[r].score * (x.array() * (loo[r].u * x * loo[r].v.transpose()).array()).sum();
        cross[r] += acc;
      }
    }
    double norm2 = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
      norm2 += full[r].score * full[r].score;
      const double want = norm2 - 2.0 * cross[r] / static_cast<double>(n);
      EXPECT_NEAR(curve.objective[r], want, 1e-10 * std::max(1.0, std::abs(want))) << "r=" << r + 1;
    }
  }
}

TEST(CvFrobenius, SingleCandidate) {
  CvOptions co;
  co.r_max = 1;
  co.folds = 5;
  const CvCurve c = cv_frobenius(gaussian_set(3, 3, 20, 4), co);
  ASSERT_EQ(c.objective.size(), 1u);
  EXPECT_EQ(c.chosen_r, 1);
  const CvCurve p = cv_prediction(gaussian_set(3, 3, 20, 4), co);
  ASSERT_EQ(p.objective.size(), 1u);
  EXPECT_EQ(p.chosen_r, 1);
}

TEST(CvFrobenius, SeparableDataChoosesOne) {
  int ones = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ScdEstimate truth = separable_truth(8, 100 + s);
    CvOptions co;
    co.seed = s;
    ones += cv_frobenius(sample_gaussian(truth, 400, 200 + s), co).chosen_r == 1;
  }
  EXPECT_GE(ones, 8);
}

TEST(CvFrobenius, NestedTruncationMatchesRefit) {
  const SampleSet data = gaussian_set(4, 3, 40, 5);
  CvOptions co;
  co.r_max = 3;
  co.fit_tol = 1e-13;
  co.fit_max_iter = 20000;
  const CvCurve nested = cv_frobenius(data, co);
  ASSERT_TRUE(nested.warnings.empty());
  for (Index r = 1; r <= 3; ++r) {
    co.r_max = r;
    const CvCurve single = cv_frobenius(data, co);
    EXPECT_NEAR(single.objective.back(), nested.objective[static_cast<std::size_t>(r - 1)], 1e-8);
  }
}

TEST(CvFrobenius, LeaveOneOutTermIsUnbiased) {
  // With zero-mean uncentered data, E <X_j, C^(j) X_j> = <E C_{N-1}, C>.
  RandomCovSpec spec;
  spec.kind = RandomCovKind::kSmoothEigen;
  spec.r = 2;
  spec.k1 = 3;
  spec.seed = 9;
  const ScdEstimate truth = random_rsep(spec);
  const std::size_t n = 10;
  const auto inner_truth = [&](const ScdEstimate& est) {
    double s = 0.0;
    for (const auto& a : est.components)
      for (const auto& b : truth.components)
        s += a.score * b.score * frob_inner(a.left, b.left) * frob_inner(a.right, b.right);
    return s;
  };
  std::vector<double> loo, fresh;
  CvOptions co;
  co.r_max = 1;
  co.folds = static_cast<int>(n);
  FitOptions fo;
  fo.r = 1;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const SampleSet data = sample_gaussian(truth, n, 1000 + s, false);
    const double norm2 = fit(data, fo).squared_norm();
    loo.push_back(0.5 * (norm2 - cv_frobenius(data, co).objective[0]));
    fresh.push_back(inner_truth(fit(sample_gaussian(truth, n - 1, 5000 + s, false), fo)));
  }
  const double se = std::sqrt(variance(loo) / loo.size() + variance(fresh) / fresh.size());
  EXPECT_LE(std::abs(mean_of(loo) - mean_of(fresh)), 3.0 * se);
}

TEST(CvFrobenius, Validation) {
  const SampleSet data = gaussian_set(3, 3, 10, 6);
  CvOptions co;
  co.folds = 1;
  EXPECT_THROW(cv_frobenius(data, co), InvalidArgument);
  co.folds = 11;
  EXPECT_THROW(cv_frobenius(data, co), InvalidArgument);
  co.folds = 5;
  co.r_max = 10;
  EXPECT_THROW(cv_frobenius(data, co), InvalidArgument);
  co.r_max = 2;
  co.patterns_per_sample = 0;
  EXPECT_THROW(cv_prediction(data, co), InvalidArgument);
}

TEST(CvFolds, RoundRobinPartition) {
  const auto folds = detail::make_folds(23, 5, 7);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(23, 0);
  for (const auto& f : folds) {
    EXPECT_GE(f.size(), 4u);
    EXPECT_LE(f.size(), 5u);
    for (auto i : f) ++seen[i];
  }
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_EQ(detail::make_folds(23, 5, 7), folds);
  EXPECT_EQ(detail::complement_of(folds[0], 23).size(), 23 - folds[0].size());
}

TEST(CvPrediction, WhiteNoiseCurveIsFlat) {
  CvOptions co;
  co.r_max = 3;
  co.patterns_per_sample = 2;
  const CvCurve c = cv_prediction(gaussian_set(6, 6, 400, 8), co);
  for (double v : c.objective) {
    EXPECT_NEAR(v, 1.0, 0.1);
    EXPECT_NEAR(v, c.objective[0], 0.03);
  }
}

TEST(CvPrediction, TwoSeparableTruthChoosesAtLeastTwo) {
  int hits = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const ScdEstimate truth = two_separable_truth(8, 0.5, 300 + s);
    CvOptions co;
    co.seed = s;
    hits += cv_prediction(sample_gaussian(truth, 800, 400 + s), co).chosen_r >= 2;
  }
  EXPECT_GE(hits, 8);
}

TEST(CvPrediction, MorePatternsReduceVariance) {
  int smaller = 0;
  for (std::uint64_t t = 0; t < 10; ++t) {
    RandomCovSpec spec;
    spec.kind = RandomCovKind::kSmoothEigen;
    spec.r = 2;
    spec.k1 = 5;
    spec.seed = 600 + t;
    const SampleSet data = sample_gaussian(random_rsep(spec), 60, 700 + t);
    std::vector<double> one, three;
    for (std::uint64_t s = 0; s < 6; ++s) {
      CvOptions co;
      co.r_max = 2;
      co.folds = 5;
      co.seed = 10 * t + s;
      co.patterns_per_sample = 1;
      one.push_back(cv_prediction(data, co).objective[0]);
      co.patterns_per_sample = 3;
      three.push_back(cv_prediction(data, co).objective[0]);
    }
    smaller += variance(three) < variance(one);
  }
  EXPECT_GE(smaller, 7);
}

TEST(CvPrediction, ArbitraryPatternsAndDeterminism) {
  const SampleSet data = gaussian_set(4, 4, 30, 9);
  CvOptions co;
  co.r_max = 2;
  co.folds = 3;
  co.seed = 11;
  co.arbitrary_patterns = true;
  const CvCurve a = cv_prediction(data, co), b = cv_prediction(data, co);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.chosen_r, b.chosen_r);
  co.arbitrary_patterns = false;
  EXPECT_EQ(cv_frobenius(data, co).objective, cv_frobenius(data, co).objective);
}

TEST(RandomHoldout, KeepsObservedEntries) {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const MissingPattern p = random_holdout(2, 3, rng, t % 2 == 1);
    EXPECT_GT(p.observed_mask(2, 3).count(), 0);
  }
}

TEST(Scree, Examples) {
  EXPECT_TRUE(scree(ScdEstimate{}).empty());
  const ScdEstimate truth = separable_truth(5, 12);
  FitOptions fo;
  fo.r = 3;
  const auto sc = scree(fit(sample_gaussian(truth, 2000, 13), fo));
  ASSERT_EQ(sc.size(), 3u);
  EXPECT_EQ(sc[0].first, 1);
  EXPECT_EQ(sc[2].first, 3);
  EXPECT_LT(sc[1].second, 0.1 * sc[0].second);
  EXPECT_GE(sc[1].second, sc[2].second);
}

TEST(Scree, GneitingElbow) {
  const DenseSampler sampler(gneiting_dense(GneitingParams{}, 20, 20));
  FitOptions fo;
  fo.r = 6;
  fo.tol = 1e-8;
  const auto sc = scree(fit(SampleSet(sampler.draw(2048, 14)), fo));
  ASSERT_EQ(sc.size(), 6u);
  EXPECT_GT(sc[1].second / sc[0].second, 0.0);
  EXPECT_LT(sc[1].second / sc[0].second, 0.3);
  for (std::size_t i = 1; i < sc.size(); ++i) EXPECT_LE(sc[i].second, sc[i - 1].second);
}

// experiments ---------------------------------------------------------------

TEST(Stats, HandExamples) {
  EXPECT_EQ(mean_of({1, 2, 3, 6}), 3.0);
  EXPECT_EQ(median_of({5, 1, 3}), 3.0);
  EXPECT_EQ(median_of({4, 1, 3, 2}), 2.5);
  EXPECT_NEAR(std_error({1, 2, 3, 4}), std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(ranks_of({10, 30, 20, 20}), (std::vector<double>{1, 4, 2.5, 2.5}));
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 4, 9, 16}), 1.0, 1e-15);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {8, 4, 2, 1}), -1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_THROW(spearman({1, 2}, {1}), InvalidArgument);
}

TEST(Stats, BiasAsymptoteMatchesTailSums) {
  const DenseCov4 truth = gneiting_dense(GneitingParams{}, 6, 6);
  const Vector sv = oracle::scd_scores(truth);
  const std::vector<double> scores = brute_force_scd(truth).scores;
  for (std::size_t r = 0; r <= 4; ++r) {
    double tail = 0.0;
    for (Index s = static_cast<Index>(r); s < sv.size(); ++s) tail += sv(s) * sv(s);
    EXPECT_NEAR(bias_asymptote(scores, r), std::sqrt(tail) / sv.norm(), 1e-10);
  }
  EXPECT_EQ(bias_asymptote({}, 1), 0.0);
  EXPECT_EQ(bias_asymptote({2.0, 1.0}, 0), 1.0);
}

TEST(GneitingStudy, SmallRun) {
  GneitingStudyConfig cfg;
  cfg.k = 8;
  cfg.n_values = {16, 1024};
  cfg.seeds = 4;
  cfg.root_seed = 3;
  const GneitingStudyResult res = run_gneiting_study(cfg);
  ASSERT_EQ(res.bias.size(), 3u);
  EXPECT_GT(res.bias[0], res.bias[1]);
  EXPECT_GT(res.bias[1], res.bias[2]);
  for (std::size_t ri = 0; ri < 3; ++ri) {
    const double small = res.mean_error(0, ri) - res.bias[ri], large = res.mean_error(1, ri) - res.bias[ri];
    EXPECT_LT(large, small);
    EXPECT_GE(res.mean_error(1, ri), res.bias[ri] - 1e-12);
  }
  for (std::size_t ni = 0; ni < 2; ++ni) {
    double best = res.mean_error(ni, 0);
    for (std::size_t ri = 1; ri < 3; ++ri) best = std::min(best, res.mean_error(ni, ri));
    EXPECT_GE(res.mean_empirical_error(ni), best);
  }

  const ExperimentReport rep = res.report();
  EXPECT_EQ(rep.rows.size(), 2u * 4u);
  const std::string csv = rep.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,r,mean_relative_error,std_error,bias_asymptote,excess");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 9);
  const json j = rep.to_json();
  EXPECT_EQ(j["study"], "gneiting");
  EXPECT_EQ(j["replications"], 4);
  EXPECT_EQ(j["config"]["k"], 8);

  const GneitingStudyResult again = run_gneiting_study(cfg);
  EXPECT_EQ(again.report().to_csv(), csv);
  EXPECT_EQ(again.report().to_json().dump(), j.dump());
  cfg.k = 70;
  EXPECT_THROW(run_gneiting_study(cfg), OracleSizeError);
}

TEST(DecayStudy, SmallRun) {
  DecayStudyConfig cfg;
  cfg.k = 6;
  cfg.alphas = {1.0, 3.0, 6.0};
  cfg.n_values = {128};
  cfg.r_fit = {2};
  cfg.seeds = 8;
  const DecayStudyResult res = run_decay_study(cfg);
  ASSERT_EQ(res.cells.size(), 3u);
  double prev = -1.0;
  for (double a : cfg.alphas) {
    const DecayCell& c = res.cell(a, 128, 2);
    EXPECT_GE(mean_of(c.excess), -3.0 * std_error(c.excess));
    EXPECT_GE(mean_of(c.excess), prev);
    prev = mean_of(c.excess);
  }
  EXPECT_THROW(res.cell(2.0, 128, 2), InvalidArgument);
  EXPECT_EQ(res.report().rows.size(), 3u);
  EXPECT_EQ(run_decay_study(cfg).report().to_csv(), res.report().to_csv());
}

TEST(InversionStudy, SmallRun) {
  InversionStudyConfig cfg;
  cfg.k_values = {6, 10};
  cfg.kappas = {10.0, 1000.0};
  cfg.seeds = 3;
  cfg.r = 3;
  cfg.n = 100;
  cfg.dominance = false;
  const InversionStudyResult res = run_inversion_study(cfg);
  ASSERT_EQ(res.cells.size(), 12u);
  for (const auto& c : res.cells) EXPECT_TRUE(c.converged);
  EXPECT_LE(res.max_abs_error(), 3e-10);
  for (Index k : cfg.k_values) EXPECT_GT(res.median_iterations(k, 1000.0), res.median_iterations(k, 10.0));
  const json j = res.report().to_json();
  EXPECT_EQ(j["summary"]["median_iterations"].size(), 4u);
  EXPECT_EQ(run_inversion_study(cfg).report().to_csv(), res.report().to_csv());
}

TEST(InversionStudy, KappaShiftHitsTarget) {
  EigenBounds eb;
  for (double lo : {-0.5, 0.01, 0.2}) {
    eb.lambda_max = 2.0;
    eb.lambda_min = lo;
    for (double kappa : {10.0, 100.0}) {
      const double s = kappa_shift(eb, kappa);
      EXPECT_NEAR((eb.lambda_max + s) / (eb.lambda_min + s), kappa, 1e-9 * kappa);
    }
  }
  EXPECT_THROW(kappa_shift(eb, 1.0), InvalidArgument);
}

TEST(CvStudy, SmallRun) {
  CvStudyConfig cfg;
  cfg.n_values = {200};
  cfg.seeds = 2;
  cfg.r_max = 3;
  cfg.patterns_per_sample = 1;
  const CvStudyResult res = run_cv_study(cfg);
  ASSERT_EQ(res.cells.size(), 2u);
  for (const auto& c : res.cells) {
    EXPECT_EQ(c.errors.size(), 3u);
    EXPECT_GE(c.chosen_frobenius, 1);
    EXPECT_GE(c.chosen_prediction, 1);
    EXPECT_LT(c.error_at(2), c.error_at(1));
  }
  EXPECT_LE(res.hits(200, false, 0.1), 2);
  EXPECT_EQ(res.report().rows.size(), 2u);
}

TEST(TwoSeparableTruth, Construction) {
  const ScdEstimate t = two_separable_truth(6, 0.3, 1);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_NEAR(t.components[1].score / t.components[0].score, 0.3, 1e-12);
  const Vector sv = oracle::scd_scores(reconstruct_dense(t, 64));
  EXPECT_LE(sv(2), 1e-12 * sv(0));
}
