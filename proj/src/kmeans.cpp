#include "cde/kmeans.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cde/errors.hpp"
#include "cde/random.hpp"

namespace cde {

namespace {

Matrix plus_plus_seeding(const Matrix& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : d2) total += v;
      if (total > 0.0) {
        const double target = unit(rng) * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          acc += d2[i];
          if (d2[i] > 0.0 && acc >= target) {
            pick = i;
            break;
          }
        }
        if (pick == n) {
          // Rounding left target beyond the last cumulative sum.
          for (std::size_t i = n; i-- > 0;) {
            if (d2[i] > 0.0) {
              pick = i;
              break;
            }
          }
        }
      } else {
        // Every point coincides with a center already; take the first unused row.
        pick = 0;
        while (pick < n && chosen[pick]) ++pick;
        if (pick == n) pick = 0;
      }
    }
    chosen[pick] = 1;
    const auto src = points.row(pick);
    std::copy(src.begin(), src.end(), centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(c)));
  }
  return centers;
}

}  // namespace

Matrix kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, KMeansOptions options) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0) throw ConfigError("k-means needs at least one center");
  if (k > n) {
    throw ConfigError("k-means asked for " + std::to_string(k) + " centers but only " + std::to_string(n) +
                      " points are available");
  }
  Rng rng(seed);
  Matrix centers = plus_plus_seeding(points, k, rng);
  std::vector<std::size_t> assign(n, 0);
  Matrix sums(k, dim);
  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(points.row(i), centers.row(c));
        if (d < best) {
          best = d;
          assign[i] = c;
        }
      }
    }
    std::fill(sums.data().begin(), sums.data().end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(assign[i]);
      const auto p = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
      ++counts[assign[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its center
      auto center = centers.row(c);
      double shift2 = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double updated = sums(c, j) / static_cast<double>(counts[c]);
        shift2 += (updated - center[j]) * (updated - center[j]);
        center[j] = updated;
      }
      max_shift = std::max(max_shift, std::sqrt(shift2));
    }
    if (max_shift < options.tolerance) break;
  }
  return centers;
}

Matrix kmn_init_centers(const Matrix& y, std::size_t n_centers, std::uint64_t seed) {
  return kmeans(y, n_centers, seed);
}

}  // namespace cde
