#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "psca/tensor_core.hpp"

namespace psca {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Child seed of `root` for the stream labelled by `path`. Different paths give
/// independent streams; the same path always gives the same seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(root);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

inline Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  // Fill row by row so the draw order matches the row-major file layout.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

/// Symmetric matrix with Gaussian entries, scaled to unit Frobenius norm.
inline Matrix random_symmetric_unit(Index k, Rng& rng) {
  Matrix m = symmetrized(normal_matrix(k, k, rng));
  return m / m.norm();
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
inline Matrix random_orthogonal(Index k, Rng& rng) {
  const Matrix g = normal_matrix(k, k, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(k, k);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace psca
