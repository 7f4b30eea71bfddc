#pragma once

// Preconditioned conjugate gradient for the linear matrix equation
//   sum_r sigma_r A_r X B_r + c X = Y.

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "psca/errors.hpp"
#include "psca/rsep_operator.hpp"
#include "psca/tensor_core.hpp"

namespace psca {

enum class StopRule {
  kResidual,         // ||Y - op X||_F / ||Y||_F <= tol
  kIterateDistance,  // ||X_k+1 - X_k||_F < tol
};

enum class PrecondChoice { kAuto, kNone, kSeparable, kStein };

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 0;  // <= 0 means k1 * k2
  PrecondChoice preconditioner = PrecondChoice::kAuto;
  StopRule stop = StopRule::kResidual;
  int true_residual_every = 50;
  /// Called after every iteration with (iteration, iterate); for instrumentation.
  std::function<void(int, const Matrix&)> observer;
};

struct SolveReport {
  int iterations = 0;
  double final_relative_residual = 0.0;  // from the true residual at exit
  double final_step = 0.0;               // ||X_k - X_k-1||_F of the last step
  bool converged = false;
  bool breakdown = false;  // a search direction had <p, op p> <= 0
  PrecondKind preconditioner_used = PrecondKind::kNone;
};

namespace detail {

inline bool leading_factors_definite(const RSepOperator& op) {
  if (op.components.empty()) return false;
  const auto ea = sym_eigen(op.components.front().left);
  const auto eb = sym_eigen(op.components.front().right);
  const auto definite = [](const SymmetricEigen& e) {
    const double top = e.values.cwiseAbs().maxCoeff();
    return top > 0.0 && e.values.minCoeff() > 1e-12 * top;
  };
  return definite(ea) && definite(eb);
}

}  // namespace detail

/// Picks the preconditioner: Stein when the operator has a ridge, separable
/// when it has none and A_1, B_1 are positive definite, otherwise none. An
/// explicit request that cannot be built falls back along Stein -> none.
inline Preconditioner select_preconditioner(const RSepOperator& op, PrecondChoice choice) {
  PrecondKind want = PrecondKind::kNone;
  switch (choice) {
    case PrecondChoice::kNone:
      return Preconditioner::none(op.k1, op.k2);
    case PrecondChoice::kSeparable:
      want = PrecondKind::kSeparable;
      break;
    case PrecondChoice::kStein:
      want = PrecondKind::kStein;
      break;
    case PrecondChoice::kAuto:
      if (op.components.empty()) return Preconditioner::none(op.k1, op.k2);
      if (op.ridge > 0.0) {
        want = PrecondKind::kStein;
      } else if (detail::leading_factors_definite(op)) {
        want = PrecondKind::kSeparable;
      } else {
        return Preconditioner::none(op.k1, op.k2);
      }
      break;
  }
  for (PrecondKind k : {want, PrecondKind::kStein}) {
    try {
      return Preconditioner::build(op, k);
    } catch (const NumericalError&) {
    }
  }
  return Preconditioner::none(op.k1, op.k2);
}

/// PCG on matrix-shaped iterates with the Frobenius inner product, starting
/// from X = 0. `apply_op` must be symmetric positive definite on the span the
/// iteration visits and `precond` symmetric positive definite. Without
/// convergence under the residual rule, the iterate with the smallest recursive
/// residual is returned if its true residual beats the last iterate's.
template <typename ApplyOp, typename Precond>
std::pair<Matrix, SolveReport> pcg(ApplyOp&& apply_op, Precond&& precond, const Matrix& y,
                                   const SolveOptions& opts) {
  if (!(opts.tol > 0.0)) throw InvalidArgument("pcg: tol must be positive");
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : static_cast<int>(y.size());
  SolveReport report;
  Matrix x = Matrix::Zero(y.rows(), y.cols());
  const double ny = y.norm();
  if (ny == 0.0) {
    report.converged = true;
    return {std::move(x), report};
  }

  // Past the rounding floor of an ill-conditioned system the recurrence can
  // drift far from the solution, so the smallest-residual iterate is kept.
  Matrix x_best = x;
  double best = ny;
  Matrix r = y;
  Matrix z = precond(r);
  Matrix p = z;
  double rz = frob_inner(r, z);
  for (int it = 1; it <= max_iter; ++it) {
    const Matrix q = apply_op(p);
    const double pq = frob_inner(p, q);
    if (!(pq > 0.0)) {
      // Indefinite operator, or rounding on a nearly singular one.
      report.breakdown = true;
      break;
    }
    const double alpha = rz / pq;
    x.noalias() += alpha * p;
    report.iterations = it;
    report.final_step = std::abs(alpha) * p.norm();
    if (opts.true_residual_every > 0 && it % opts.true_residual_every == 0) {
      r = y - apply_op(x);
    } else {
      r.noalias() -= alpha * q;
    }
    if (opts.observer) opts.observer(it, x);
    if (const double rn = r.norm(); rn < best) {
      best = rn;
      x_best = x;
    }

    bool done = false;
    if (opts.stop == StopRule::kResidual) {
      if (r.norm() <= opts.tol * ny) {
        // Confirm on the true residual before stopping.
        r = y - apply_op(x);
        done = r.norm() <= opts.tol * ny;
      }
    } else {
      done = report.final_step < opts.tol;
    }
    if (done) {
      report.converged = true;
      break;
    }
    z = precond(r);
    const double rz_next = frob_inner(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    p = z + beta * p;
  }
  report.final_relative_residual = (y - apply_op(x)).norm() / ny;
  if (!report.converged && opts.stop == StopRule::kResidual) {
    const double rb = (y - apply_op(x_best)).norm() / ny;
    if (rb < report.final_relative_residual) {
      x = std::move(x_best);
      report.final_relative_residual = rb;
    }
  }
  if (opts.stop == StopRule::kResidual) {
    report.converged = report.final_relative_residual <= opts.tol;
  }
  return {std::move(x), report};
}

/// Solves op X = Y by PCG with the preconditioner chosen by `opts`.
inline std::pair<Matrix, SolveReport> pcg_solve(const RSepOperator& op, const Matrix& y,
                                                const SolveOptions& opts = {}) {
  if (y.rows() != op.k1 || y.cols() != op.k2) {
    throw ShapeError("pcg_solve: right-hand side must be " + std::to_string(op.k1) + "x" +
                     std::to_string(op.k2));
  }
  const Preconditioner pre = select_preconditioner(op, opts.preconditioner);
  auto result = pcg([&](const Matrix& v) { return apply(op, v); },
                    [&](const Matrix& v) { return pre.solve(v); }, y, opts);
  result.second.preconditioner_used = pre.kind();
  return result;
}

}  // namespace psca
