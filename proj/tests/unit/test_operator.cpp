#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/oracles.hpp"

using namespace psca;

namespace {

Matrix diag2(double a, double b) {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

// sum of `r` terms with unit PSD factors plus a ridge.
RSepOperator random_op(Index k1, Index k2, int r, double ridge, std::mt19937_64& g) {
  std::vector<SepComponent> comps;
  for (int q = 0; q < r; ++q) {
    comps.push_back({1.0 / (1.0 + q), oracle::unit(oracle::random_psd(k1, g)), oracle::unit(oracle::random_psd(k2, g))});
  }
  return RSepOperator(k1, k2, std::move(comps), ridge);
}

// Symmetric but indefinite factors.
RSepOperator indefinite_op(Index k1, Index k2, std::mt19937_64& g) {
  std::vector<SepComponent> comps;
  for (int q = 0; q < 2; ++q) {
    comps.push_back({1.0, oracle::unit(oracle::random_symmetric(k1, g)), oracle::unit(oracle::random_symmetric(k2, g))});
  }
  return RSepOperator(k1, k2, std::move(comps));
}

Vector dense_eigenvalues(const RSepOperator& op) {
  return oracle::kron_operator(op.components, op.ridge, op.k1, op.k2).selfadjointView<Eigen::Lower>().eigenvalues();
}

Mask random_mask(Index k1, Index k2, std::mt19937_64& g) {
  Mask m(k1, k2);
  for (Index i = 0; i < k1; ++i)
    for (Index j = 0; j < k2; ++j) m(i, j) = g() % 2 == 0;
  m(0, 0) = true;
  m(k1 - 1, k2 - 1) = false;
  return m;
}

}  // namespace

// rsep-operator -------------------------------------------------------------

TEST(Apply, HandExamples) {
  std::mt19937_64 g(1);
  const Matrix x = oracle::gaussian(3, 4, g);
  const RSepOperator scaled(3, 4, {{1.0, Matrix::Identity(3, 3) / std::sqrt(3.0), Matrix::Identity(4, 4) / 2.0}});
  EXPECT_LE((apply(scaled, x) - x / std::sqrt(12.0)).norm(), 1e-14);
  const RSepOperator ident(3, 4, {}, 1.0);
  EXPECT_EQ(apply(ident, x), x);
  EXPECT_THROW(apply(ident, Matrix::Zero(4, 3)), ShapeError);
}

TEST(Apply, MatchesKroneckerMatricization) {
  std::mt19937_64 g(2);
  for (int t = 0; t < 20; ++t) {
    const Index k1 = 1 + static_cast<Index>(g() % 6), k2 = 1 + static_cast<Index>(g() % 6);
    const RSepOperator op = t % 2 ? random_op(k1, k2, 3, 0.3, g) : indefinite_op(k1, k2, g);
    const Matrix x = oracle::gaussian(k1, k2, g);
    const Matrix want = oracle::unvec_col(oracle::kron_operator(op.components, op.ridge, k1, k2) * oracle::vec_col(x), k1, k2);
    EXPECT_LE(oracle::rel_diff(apply(op, x), want), 1e-10);
    const Matrix via_dense = unvec_rowmajor(op.dense_operator() * vec_rowmajor(x), k1, k2);
    EXPECT_LE(oracle::rel_diff(via_dense, want), 1e-10);
  }
}

TEST(RSepOperator, Validation) {
  EXPECT_THROW(RSepOperator(0, 2, {}), InvalidArgument);
  EXPECT_THROW(RSepOperator(2, 2, {}, std::nan("")), InvalidArgument);
  EXPECT_THROW(RSepOperator(2, 2, {{1.0, Matrix::Identity(3, 3), Matrix::Identity(2, 2)}}), ShapeError);
  const RSepOperator op(2, 2, {{1.0, Matrix::Identity(2, 2), Matrix::Identity(2, 2)}}, 0.5);
  EXPECT_EQ(op.degree_of_separability(), 2u);
}

TEST(ExtremalEigen, HandExamples) {
  RSepOperator op(2, 2, {{1.0, diag2(2, 1), diag2(3, 1)}});
  for (EigenMethod m : {EigenMethod::kLanczos, EigenMethod::kPower}) {
    op.ridge = 0.0;
    EigenBounds eb = extremal_eigen(op, 1e-12, 0, 0, m);
    EXPECT_NEAR(eb.lambda_max, 6.0, 1e-8);
    EXPECT_NEAR(eb.lambda_min, 1.0, 1e-8);
    op.ridge = 0.5;
    eb = extremal_eigen(op, 1e-12, 0, 0, m);
    EXPECT_NEAR(eb.lambda_max, 6.5, 1e-8);
    EXPECT_NEAR(eb.lambda_min, 1.5, 1e-8);
    EXPECT_GE(eb.lambda_max, eb.lambda_min);
  }
  EXPECT_THROW(extremal_eigen(op, 0.0), InvalidArgument);
}

TEST(ExtremalEigen, MatchesDenseSpectrum) {
  std::mt19937_64 g(3);
  for (int t = 0; t < 10; ++t) {
    const RSepOperator op = t % 2 ? random_op(6, 6, 2, 0.0, g) : indefinite_op(6, 6, g);
    const Vector ev = dense_eigenvalues(op);
    const double scale = ev.cwiseAbs().maxCoeff();
    const EigenBounds eb = extremal_eigen(op, 1e-10, 0, static_cast<std::uint64_t>(t));
    EXPECT_TRUE(eb.converged);
    EXPECT_NEAR(eb.lambda_max, ev.maxCoeff(), 1e-6 * scale);
    EXPECT_NEAR(eb.lambda_min, ev.minCoeff(), 1e-6 * scale);
    EXPECT_LE(std::abs(eb.lambda_min - ev.minCoeff()), eb.residual_min + 1e-12 * scale);
    for (int s = 0; s < 5; ++s) {
      Matrix x = oracle::gaussian(6, 6, g);
      x /= x.norm();
      const double rq = frob_inner(x, apply(op, x));
      EXPECT_GE(rq, eb.lambda_min - 1e-8 * scale);
      EXPECT_LE(rq, eb.lambda_max + 1e-8 * scale);
    }
  }
}

TEST(Positivize, HandExamples) {
  const RSepOperator neg(2, 2, {{1.0, diag2(2, -0.25), diag2(2, 1)}});
  auto [pos, rep] = positivize(neg, 0.1, 1e-12);
  EXPECT_NEAR(rep.lambda_min, -0.5, 1e-9);
  EXPECT_NEAR(rep.applied_shift, 0.6, 1e-9);
  EXPECT_NEAR(pos.ridge, 0.6, 1e-9);
  EXPECT_GE(rep.lambda_max, rep.lambda_min);

  const RSepOperator fine(2, 2, {{1.0, diag2(1, 0.2), diag2(1, 1)}});
  auto [same, rep2] = positivize(fine, 0.1, 1e-12);
  EXPECT_EQ(rep2.applied_shift, 0.0);
  EXPECT_EQ(same.ridge, 0.0);
  EXPECT_THROW(positivize(fine, -1.0), InvalidArgument);
}

TEST(Positivize, Idempotent) {
  std::mt19937_64 g(4);
  for (int t = 0; t < 10; ++t) {
    const RSepOperator op = indefinite_op(5, 4, g);
    auto [once, r1] = positivize(op, 1e-3, 1e-10, 0, 1);
    EXPECT_GT(r1.applied_shift, 0.0);
    EXPECT_GE(dense_eigenvalues(once).minCoeff(), 1e-3 - 1e-9);
    auto [twice, r2] = positivize(once, 1e-3, 1e-10, 0, 2);
    EXPECT_LE(r2.applied_shift, 1e-8 * r1.lambda_max);
  }
}

TEST(Preconditioner, IdentityAndHandCase) {
  std::mt19937_64 g(5);
  const RSepOperator ident(2, 2, {{1.0, Matrix::Identity(2, 2), Matrix::Identity(2, 2)}});
  const Preconditioner p = Preconditioner::build(ident, PrecondKind::kSeparable);
  const Matrix y = oracle::gaussian(2, 2, g);
  EXPECT_LE((precondition_solve(p, y) - y).norm(), 1e-15);

  const Matrix a = diag2(2, 1) / std::sqrt(5.0), b = diag2(3, 1) / std::sqrt(10.0);
  const RSepOperator op(2, 2, {{std::sqrt(50.0), a, b}});
  const Preconditioner q = Preconditioner::build(op, PrecondKind::kSeparable);
  Matrix want(2, 2);
  want << 1.0 / 6.0, 1.0 / 2.0, 1.0 / 3.0, 1.0;
  EXPECT_LE((precondition_solve(q, Matrix::Ones(2, 2)) - want).norm(), 1e-14);
}

TEST(Preconditioner, RoundTrip) {
  std::mt19937_64 g(6);
  for (PrecondKind kind : {PrecondKind::kSeparable, PrecondKind::kStein}) {
    RSepOperator op = random_op(5, 4, 2, 0.2, g);
    op.components[0].left += 0.1 * Matrix::Identity(5, 5);
    op.components[0].right += 0.1 * Matrix::Identity(4, 4);
    const Preconditioner p = Preconditioner::build(op, kind);
    const Matrix x = oracle::gaussian(5, 4, g);
    EXPECT_LE(oracle::rel_diff(p.solve(p.apply(x)), x), 1e-12);
    EXPECT_EQ(p.shift(), kind == PrecondKind::kStein ? 0.2 : 0.0);
  }
}

TEST(Preconditioner, SelectionAndFallback) {
  std::mt19937_64 g(7);
  RSepOperator op = random_op(4, 4, 2, 0.0, g);
  op.components[0].left += Matrix::Identity(4, 4);
  op.components[0].right += Matrix::Identity(4, 4);
  EXPECT_EQ(select_preconditioner(op, PrecondChoice::kAuto).kind(), PrecondKind::kSeparable);
  op.ridge = 0.1;
  EXPECT_EQ(select_preconditioner(op, PrecondChoice::kAuto).kind(), PrecondKind::kStein);
  EXPECT_EQ(select_preconditioner(op, PrecondChoice::kNone).kind(), PrecondKind::kNone);

  const RSepOperator bad = indefinite_op(4, 4, g);
  EXPECT_THROW(Preconditioner::build(bad, PrecondKind::kSeparable), NumericalError);
  EXPECT_EQ(select_preconditioner(bad, PrecondChoice::kAuto).kind(), PrecondKind::kNone);
  EXPECT_EQ(select_preconditioner(bad, PrecondChoice::kSeparable).kind(), PrecondKind::kNone);
  // Singular leading factors with a ridge: separable fails, Stein works.
  RandomCovSpec spec;
  spec.r = 2;
  spec.k1 = 4;
  RSepOperator blocks = RSepOperator::from_estimate(random_rsep(spec), 0.5);
  EXPECT_EQ(select_preconditioner(blocks, PrecondChoice::kSeparable).kind(), PrecondKind::kStein);
  EXPECT_THROW(Preconditioner::build(RSepOperator(2, 2, {}), PrecondKind::kStein), NumericalError);
}

// solver --------------------------------------------------------------------

TEST(Pcg, IdentityInOneIteration) {
  std::mt19937_64 g(8);
  const Matrix y = oracle::gaussian(3, 5, g);
  auto [x, rep] = pcg_solve(RSepOperator(3, 5, {}, 1.0), y);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_LE((x - y).norm(), 1e-14);
}

TEST(Pcg, SeparablePreconditionerSolvesSeparableSystem) {
  std::mt19937_64 g(9);
  const RSepOperator op(5, 4, {{2.0, oracle::unit(oracle::random_psd(5, g) + Matrix::Identity(5, 5)),
                                oracle::unit(oracle::random_psd(4, g) + Matrix::Identity(4, 4))}});
  SolveOptions so;
  so.preconditioner = PrecondChoice::kSeparable;
  auto [x, rep] = pcg_solve(op, oracle::gaussian(5, 4, g), so);
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 2);
  EXPECT_EQ(rep.preconditioner_used, PrecondKind::kSeparable);
}

TEST(Pcg, MatchesDenseSolve) {
  std::mt19937_64 g(10);
  for (int t = 0; t < 12; ++t) {
    const Index k1 = 2 + static_cast<Index>(g() % 7), k2 = 2 + static_cast<Index>(g() % 7);
    const RSepOperator op = random_op(k1, k2, 3, 0.05, g);
    const Matrix y = oracle::gaussian(k1, k2, g);
    SolveOptions so;
    so.max_iter = 500;
    so.preconditioner = std::array{PrecondChoice::kAuto, PrecondChoice::kNone, PrecondChoice::kStein}[t % 3];
    auto [x, rep] = pcg_solve(op, y, so);
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.final_relative_residual, so.tol);
    const Matrix want = oracle::unvec_col(
        oracle::kron_operator(op.components, op.ridge, k1, k2).llt().solve(oracle::vec_col(y)), k1, k2);
    EXPECT_LE(oracle::rel_diff(x, want), 1e-8);
  }
}

TEST(Pcg, EnergyErrorIsNonIncreasing) {
  std::mt19937_64 g(11);
  const RSepOperator op = random_op(6, 5, 3, 0.01, g);
  const Matrix x_true = oracle::gaussian(6, 5, g);
  const Matrix y = apply(op, x_true);
  std::vector<double> energy;
  SolveOptions so;
  so.preconditioner = PrecondChoice::kNone;
  so.observer = [&](int, const Matrix& x) {
    const Matrix e = x - x_true;
    energy.push_back(frob_inner(e, apply(op, e)));
  };
  auto [x, rep] = pcg_solve(op, y, so);
  ASSERT_GT(energy.size(), 3u);
  for (std::size_t i = 1; i < energy.size(); ++i) EXPECT_LE(energy[i], energy[i - 1] * (1 + 1e-9) + 1e-28);
}

TEST(Pcg, ZeroRightHandSide) {
  auto [x, rep] = pcg_solve(RSepOperator(3, 3, {}, 2.0), Matrix::Zero(3, 3));
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_EQ(x.norm(), 0.0);
}

TEST(Pcg, BreakdownOnIndefiniteOperator) {
  std::mt19937_64 g(12);
  auto [x, rep] = pcg_solve(RSepOperator(3, 3, {}, -1.0), oracle::gaussian(3, 3, g));
  EXPECT_TRUE(rep.breakdown);
  EXPECT_FALSE(rep.converged);
}

TEST(Pcg, IterateDistanceRule) {
  std::mt19937_64 g(13);
  const RSepOperator op = random_op(6, 6, 2, 0.1, g);
  const Matrix x_true = oracle::gaussian(6, 6, g);
  SolveOptions so;
  so.stop = StopRule::kIterateDistance;
  auto [x, rep] = pcg_solve(op, apply(op, x_true), so);
  EXPECT_TRUE(rep.converged);
  EXPECT_LT(rep.final_step, so.tol);
  EXPECT_LE((x - x_true).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pcg, IterationCapAndValidation) {
  std::mt19937_64 g(14);
  const RSepOperator op = random_op(6, 6, 3, 1e-4, g);
  SolveOptions so;
  so.max_iter = 1;
  so.preconditioner = PrecondChoice::kNone;
  auto [x, rep] = pcg_solve(op, oracle::gaussian(6, 6, g), so);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_GT(rep.final_relative_residual, so.tol);
  so.tol = 0.0;
  EXPECT_THROW(pcg_solve(op, oracle::gaussian(6, 6, g), so), InvalidArgument);
  EXPECT_THROW(pcg_solve(op, Matrix::Zero(5, 6)), ShapeError);
}

TEST(Pcg, UnconvergedReturnsBestIterate) {
  // Nearly singular: residual floor sits above the tolerance.
  const RSepOperator op(4, 4, {{1.0, Matrix::Identity(4, 4) / 2.0, Matrix::Identity(4, 4) / 2.0}}, 1e-12);
  std::mt19937_64 g(22);
  RSepOperator bad = op;
  bad.components.push_back({0.9, oracle::unit(oracle::random_psd(4, g, 1)), oracle::unit(oracle::random_psd(4, g, 1))});
  bad.components[0].score = 1e-9;
  const Matrix y = oracle::gaussian(4, 4, g);
  double best = 1e300, last = 0.0;
  SolveOptions so;
  so.tol = 1e-300;
  so.max_iter = 200;
  so.preconditioner = PrecondChoice::kNone;
  so.observer = [&](int, const Matrix& x) {
    last = (y - apply(bad, x)).norm() / y.norm();
    best = std::min(best, last);
  };
  auto [x, rep] = pcg_solve(bad, y, so);
  EXPECT_FALSE(rep.converged);
  // Selection runs on the recursive residual, which tracks the true one only
  // up to rounding.
  EXPECT_LE(rep.final_relative_residual, last);
  EXPECT_LE(rep.final_relative_residual, 2.0 * best);
}

// predictor -----------------------------------------------------------------

TEST(Blup, WhiteNoisePredictsZero) {
  std::mt19937_64 g(15);
  const RSepOperator op(4, 5, {{1.0, Matrix::Identity(4, 4) / 2.0, Matrix::Identity(5, 5) / std::sqrt(5.0)}});
  const Matrix x = oracle::gaussian(4, 5, g);
  const MissingPattern pat = MissingPattern::row_col({1}, {0, 3});
  const Matrix pred = blup(op, x, pat);
  const Mask obs = pat.observed_mask(4, 5);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 5; ++j) EXPECT_NEAR(pred(i, j), obs(i, j) ? x(i, j) : 0.0, 1e-14);
}

TEST(Blup, FullyObservedReturnsInput) {
  std::mt19937_64 g(16);
  const RSepOperator op = random_op(3, 4, 2, 0.1, g);
  const Matrix x = oracle::gaussian(3, 4, g);
  EXPECT_EQ(blup(op, x, MissingPattern::row_col({}, {})), x);
  EXPECT_EQ(blup(op, x, MissingPattern::arbitrary(Mask::Constant(3, 4, true))), x);
}

TEST(Blup, MatchesDenseConditionalMean) {
  std::mt19937_64 g(17);
  for (int t = 0; t < 20; ++t) {
    const Index k1 = 2 + static_cast<Index>(g() % 7), k2 = 2 + static_cast<Index>(g() % 7);
    const RSepOperator op = random_op(k1, k2, 3, 0.05, g);
    const Matrix sigma = oracle::kron_operator(op.components, op.ridge, k1, k2);
    const Matrix x = oracle::gaussian(k1, k2, g);
    MissingPattern pat;
    if (t % 2 == 0) {
      pat = MissingPattern::arbitrary(random_mask(k1, k2, g));
    } else {
      std::vector<Index> rows{static_cast<Index>(g() % k1)}, cols{static_cast<Index>(g() % k2)};
      if (k1 > 2) rows.push_back(static_cast<Index>(g() % k1));
      pat = MissingPattern::row_col(rows, cols);
    }
    const Mask obs = pat.observed_mask(k1, k2);
    const Matrix want = oracle::blup(sigma, x, obs);
    const Matrix got = blup(op, x, pat);
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, want.cwiseAbs().maxCoeff()));
  }
}

TEST(Restrict, HandExamples) {
  std::mt19937_64 g(18);
  const RSepOperator op = random_op(4, 3, 2, 0.25, g);
  const RSepOperator full = restrict_operator(op, {0, 1, 2, 3}, {0, 1, 2});
  for (std::size_t r = 0; r < op.size(); ++r) {
    EXPECT_EQ(full.components[r].left, op.components[r].left);
    EXPECT_EQ(full.components[r].right, op.components[r].right);
  }
  EXPECT_EQ(full.ridge, op.ridge);

  const RSepOperator one = restrict_operator(op, {2}, {1});
  double want = op.ridge;
  for (const auto& c : op.components) want += c.score * c.left(2, 2) * c.right(1, 1);
  EXPECT_NEAR(apply(one, Matrix::Ones(1, 1))(0, 0), want, 1e-14);
  EXPECT_FALSE(one.normalized_factors);
  EXPECT_THROW(restrict_operator(op, {}, {0}), InvalidArgument);
  EXPECT_THROW(restrict_operator(op, {4}, {0}), InvalidArgument);
}

TEST(Blup, PatternAndShapeErrors) {
  std::mt19937_64 g(19);
  const RSepOperator op = random_op(3, 3, 1, 0.1, g);
  const Matrix x = oracle::gaussian(3, 3, g);
  EXPECT_THROW(blup(op, x, MissingPattern::row_col({3}, {})), InvalidArgument);
  EXPECT_THROW(blup(op, x, MissingPattern::row_col({0, 1, 2}, {})), InvalidArgument);
  EXPECT_THROW(blup(op, x, MissingPattern::arbitrary(Mask::Constant(2, 3, true))), ShapeError);
  EXPECT_THROW(blup(op, x, MissingPattern::arbitrary(Mask::Constant(3, 3, false))), InvalidArgument);
  EXPECT_THROW(blup(op, Matrix::Zero(3, 2), MissingPattern::row_col({0}, {})), ShapeError);
}

TEST(Blup, NonConvergenceThrows) {
  std::mt19937_64 g(20);
  const RSepOperator op = random_op(8, 8, 3, 1e-6, g);
  SolveOptions so;
  so.max_iter = 1;
  so.preconditioner = PrecondChoice::kNone;
  EXPECT_THROW(blup(op, oracle::gaussian(8, 8, g), MissingPattern::row_col({0}, {0}), so), NumericalError);
  EXPECT_FALSE(blup_report(op, oracle::gaussian(8, 8, g), MissingPattern::row_col({0}, {0}), so).solve.converged);
}

TEST(Blup, UnbiasedAndBeatsZeroPredictor) {
  RandomCovSpec spec;
  spec.kind = RandomCovKind::kSmoothEigen;
  spec.r = 2;
  spec.k1 = 6;
  spec.k2 = 5;
  const ScdEstimate truth = random_rsep(spec);
  const RSepOperator op = RSepOperator::from_estimate(truth, 1e-3);
  const auto xs = sample_gaussian_matrices(truth, 500, 3);
  const MissingPattern pat = MissingPattern::row_col({1, 4}, {2});
  const Mask obs = pat.observed_mask(6, 5);
  std::vector<double> avg;
  double blup_sq = 0.0, zero_sq = 0.0;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const Matrix pred = blup(op, xs[s], pat);
    double m = 0.0;
    for (Index i = 0; i < 6; ++i)
      for (Index j = 0; j < 5; ++j)
        if (!obs(i, j)) {
          m += pred(i, j);
          if (s < 100) {
            blup_sq += std::pow(pred(i, j) - xs[s](i, j), 2);
            zero_sq += std::pow(xs[s](i, j), 2);
          }
        }
    avg.push_back(m);
  }
  double mean = 0.0, var = 0.0;
  for (double v : avg) mean += v / avg.size();
  for (double v : avg) var += (v - mean) * (v - mean) / (avg.size() - 1);
  EXPECT_LE(std::abs(mean), 3.0 * std::sqrt(var / avg.size()));
  EXPECT_LE(blup_sq, zero_sq);
}

TEST(Blup, PositivizedWrapperAndMean) {
  std::mt19937_64 g(21);
  const RSepOperator op = indefinite_op(4, 4, g);
  const RSepOperator pos = positivize_relative(op, 1e-8);
  EXPECT_GE(dense_eigenvalues(pos).minCoeff(), 1e-8 * dense_eigenvalues(op).maxCoeff() * (1 - 1e-6));
  const Matrix x = oracle::gaussian(4, 4, g), mean = oracle::gaussian(4, 4, g);
  const MissingPattern pat = MissingPattern::row_col({1}, {2});
  const Matrix a = blup_positivized(op, x + mean, pat, {}, mean);
  const Matrix b = blup_positivized(op, x, pat) + mean;
  EXPECT_LE(oracle::rel_diff(a, b), 1e-12);
  EXPECT_THROW(blup_positivized(op, x, pat, {}, Matrix::Zero(3, 4)), ShapeError);
}
