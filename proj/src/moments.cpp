#include "cde/moments.hpp"

#include <cmath>
#include <vector>

#include "cde/errors.hpp"

namespace cde {

MomentReport numeric_moments_1d(const std::function<double(double)>& pdf, Interval support,
                                std::size_t n_points) {
  if (n_points < 2) throw ConfigError("numeric_moments_1d needs at least 2 quadrature points");
  std::vector<double> nodes;
  std::vector<double> weights;
  gauss_legendre_nodes(support, n_points, nodes, weights);
  std::vector<double> dens(n_points);
  double mass = 0.0;
  double first = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) {
    dens[i] = pdf(nodes[i]);
    mass += weights[i] * dens[i];
    first += weights[i] * dens[i] * nodes[i];
  }
  const double mean = first;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
  for (std::size_t i = 0; i < n_points; ++i) {
    const double d = nodes[i] - mean;
    const double wp = weights[i] * dens[i];
    const double d2 = d * d;
    m2 += wp * d2;
    m3 += wp * d2 * d;
    m4 += wp * d2 * d2;
  }
  MomentReport r;
  r.mean = {mean};
  r.covariance = Matrix(1, 1, m2);
  const double sd = std::sqrt(m2);
  r.skewness = m3 / (sd * sd * sd);
  r.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  if (mass < 0.99) {
    r.warnings.push_back("truncated support: density mass on [" + std::to_string(support.lo) + ", " +
                         std::to_string(support.hi) + "] is " + std::to_string(mass));
  }
  return r;
}

MomentReport numeric_moments_mc(const Sampler& draw, std::size_t dim, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("numeric_moments_mc needs at least one sample");
  Rng rng(seed);
  std::vector<double> samples(n * dim);
  for (std::size_t i = 0; i < n; ++i) draw(rng, std::span<double>(samples.data() + i * dim, dim));
  const double dn = static_cast<double>(n);
  MomentReport r;
  r.mean.assign(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) r.mean[j] += samples[i * dim + j];
  }
  for (double& v : r.mean) v /= dn;
  r.covariance = Matrix(dim, dim);
  double m3 = 0.0;
  double m4 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* s = samples.data() + i * dim;
    for (std::size_t a = 0; a < dim; ++a) {
      const double da = s[a] - r.mean[a];
      for (std::size_t b = a; b < dim; ++b) r.covariance(a, b) += da * (s[b] - r.mean[b]);
    }
    if (dim == 1) {
      const double d = s[0] - r.mean[0];
      m3 += d * d * d;
      m4 += d * d * d * d;
    }
  }
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      r.covariance(a, b) /= dn;
      r.covariance(b, a) = r.covariance(a, b);
    }
  }
  if (dim == 1) {
    const double var = r.covariance(0, 0);
    r.skewness = (m3 / dn) / std::pow(var, 1.5);
    r.excess_kurtosis = (m4 / dn) / (var * var) - 3.0;
  }
  return r;
}

}  // namespace cde
