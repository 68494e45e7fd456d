#pragma once

#include <cstddef>
#include <cstdint>

#include "cde/matrix.hpp"

namespace cde {

struct KMeansOptions {
  std::size_t max_iterations = 100;
  // Stop once no center moves farther than this (Euclidean).
  double tolerance = 1e-6;
};

// Lloyd's algorithm with k-means++ seeding. Rows of `points` are observations;
// returns a k x dim matrix of centers. Deterministic given the seed.
Matrix kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, KMeansOptions options = {});

// Kernel centers for the KMN: k-means on (normalized) targets. Throws
// ConfigError when more centers than points are requested.
Matrix kmn_init_centers(const Matrix& y, std::size_t n_centers, std::uint64_t seed);

}  // namespace cde
