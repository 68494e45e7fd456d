#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cde/matrix.hpp"
#include "json.hpp"

namespace cde {

// Nested row arrays; from_json raises ParseError on ragged or non-numeric input.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

// Paired observations: row n of `x` conditions row n of `y`.
struct Dataset {
  Matrix x;
  Matrix y;

  Dataset() = default;
  // Validates equal row counts, at least one row, finite entries.
  Dataset(Matrix x_, Matrix y_);

  std::size_t size() const { return x.rows(); }
  std::size_t x_dim() const { return x.cols(); }
  std::size_t y_dim() const { return y.cols(); }

  Dataset subset(std::span<const std::size_t> indices) const;
  // Rows [begin, end).
  Dataset slice(std::size_t begin, std::size_t end) const;
  // Concatenation of rows.
  static Dataset concat(const Dataset& a, const Dataset& b);

  nlohmann::json to_json() const;  // {"x": rows, "y": rows}
  static Dataset from_json(const nlohmann::json& j);
};

// Empirical mean and population standard deviation per column of x and y.
struct NormalizationStats {
  std::vector<double> mu_x;
  std::vector<double> sigma_x;
  std::vector<double> mu_y;
  std::vector<double> sigma_y;

  static NormalizationStats identity(std::size_t x_dim, std::size_t y_dim);

  void normalize_x(std::span<const double> x, std::span<double> out) const;
  void normalize_y(std::span<const double> y, std::span<double> out) const;
  Dataset apply(const Dataset& data) const;

  // Product of sigma_y: the Jacobian of the y back-transform.
  double y_jacobian() const;

  nlohmann::json to_json() const;
  static NormalizationStats from_json(const nlohmann::json& j);
};

struct NormalizationResult {
  NormalizationStats stats;
  Dataset normalized;
  std::vector<std::string> warnings;
};

// Standard deviations below this are floored to it (constant columns).
inline constexpr double kMinNormalizationStd = 1e-8;

// Needs at least two rows. Constant columns get sigma = 1e-8 and a warning.
NormalizationResult normalize_fit(const Dataset& data);

}  // namespace cde
