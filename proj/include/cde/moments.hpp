#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>

#include "cde/gaussian_mixture.hpp"
#include "cde/quadrature.hpp"
#include "cde/random.hpp"

namespace cde {

// Mean, variance, skewness and excess kurtosis of a univariate density by
// Gauss-Legendre quadrature of the defining integrals. Attaches a warning when
// the captured probability mass is below 0.99.
MomentReport numeric_moments_1d(const std::function<double(double)>& pdf, Interval support,
                                std::size_t n_points = 10000);

// Draws one sample into `out` (length = dimension).
using Sampler = std::function<void(Rng&, std::span<double>)>;

// Sample mean and covariance (1/n normalization) of n draws. Univariate
// samplers also get skewness and excess kurtosis.
MomentReport numeric_moments_mc(const Sampler& draw, std::size_t dim, std::size_t n = 100000,
                                std::uint64_t seed = 0);

}  // namespace cde
