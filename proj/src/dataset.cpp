#include "cde/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cde/errors.hpp"

namespace cde {

nlohmann::json matrix_to_json(const Matrix& m) {
  auto out = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return out;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    return Matrix::from_rows(j.get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("matrix JSON: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("matrix JSON: ") + e.what());
  }
}

Dataset::Dataset(Matrix x_, Matrix y_) : x(std::move(x_)), y(std::move(y_)) {
  if (x.rows() != y.rows()) {
    throw ShapeError("dataset has " + std::to_string(x.rows()) + " x rows but " + std::to_string(y.rows()) +
                     " y rows");
  }
  if (x.rows() == 0) throw ShapeError("dataset must contain at least one row");
  if (x.cols() == 0 || y.cols() == 0) throw ShapeError("dataset x and y need at least one column");
  if (!x.all_finite() || !y.all_finite()) throw DomainError("dataset entries must be finite");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  return Dataset(x.select_rows(indices), y.select_rows(indices));
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return subset(idx);
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
  if (a.x_dim() != b.x_dim() || a.y_dim() != b.y_dim()) throw ShapeError("concat: dataset dimensions differ");
  std::vector<double> xs(a.x.data().begin(), a.x.data().end());
  xs.insert(xs.end(), b.x.data().begin(), b.x.data().end());
  std::vector<double> ys(a.y.data().begin(), a.y.data().end());
  ys.insert(ys.end(), b.y.data().begin(), b.y.data().end());
  const std::size_t n = a.size() + b.size();
  return Dataset(Matrix(n, a.x_dim(), std::move(xs)), Matrix(n, a.y_dim(), std::move(ys)));
}

nlohmann::json Dataset::to_json() const { return {{"x", matrix_to_json(x)}, {"y", matrix_to_json(y)}}; }

Dataset Dataset::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("x") || !j.contains("y")) throw ParseError("dataset JSON needs x and y");
  try {
    return Dataset(matrix_from_json(j.at("x")), matrix_from_json(j.at("y")));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("dataset JSON: ") + e.what());
  }
}

NormalizationStats NormalizationStats::identity(std::size_t x_dim, std::size_t y_dim) {
  return {std::vector<double>(x_dim, 0.0), std::vector<double>(x_dim, 1.0), std::vector<double>(y_dim, 0.0),
          std::vector<double>(y_dim, 1.0)};
}

void NormalizationStats::normalize_x(std::span<const double> x, std::span<double> out) const {
  if (x.size() != mu_x.size()) throw ShapeError("normalize_x: dimension mismatch");
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mu_x[j]) / sigma_x[j];
}

void NormalizationStats::normalize_y(std::span<const double> y, std::span<double> out) const {
  if (y.size() != mu_y.size()) throw ShapeError("normalize_y: dimension mismatch");
  for (std::size_t j = 0; j < y.size(); ++j) out[j] = (y[j] - mu_y[j]) / sigma_y[j];
}

Dataset NormalizationStats::apply(const Dataset& data) const {
  Matrix x(data.size(), data.x_dim());
  Matrix y(data.size(), data.y_dim());
  for (std::size_t i = 0; i < data.size(); ++i) {
    normalize_x(data.x.row(i), x.row(i));
    normalize_y(data.y.row(i), y.row(i));
  }
  return Dataset(std::move(x), std::move(y));
}

double NormalizationStats::y_jacobian() const {
  double j = 1.0;
  for (double s : sigma_y) j *= s;
  return j;
}

nlohmann::json NormalizationStats::to_json() const {
  return {{"mu_x", mu_x}, {"sigma_x", sigma_x}, {"mu_y", mu_y}, {"sigma_y", sigma_y}};
}

NormalizationStats NormalizationStats::from_json(const nlohmann::json& j) {
  NormalizationStats s;
  s.mu_x = j.at("mu_x").get<std::vector<double>>();
  s.sigma_x = j.at("sigma_x").get<std::vector<double>>();
  s.mu_y = j.at("mu_y").get<std::vector<double>>();
  s.sigma_y = j.at("sigma_y").get<std::vector<double>>();
  if (s.mu_x.size() != s.sigma_x.size() || s.mu_y.size() != s.sigma_y.size()) {
    throw ParseError("normalization stats: mean/std lengths differ");
  }
  for (double v : s.sigma_x) {
    if (!(v > 0.0)) throw ParseError("normalization stats: sigma_x must be > 0");
  }
  for (double v : s.sigma_y) {
    if (!(v > 0.0)) throw ParseError("normalization stats: sigma_y must be > 0");
  }
  return s;
}

namespace {

void column_stats(const Matrix& m, const char* name, std::vector<double>& mu, std::vector<double>& sd,
                  std::vector<std::string>& warnings) {
  const std::size_t n = m.rows();
  mu.assign(m.cols(), 0.0);
  sd.assign(m.cols(), 0.0);
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += m(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double d = m(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double s = std::sqrt(var);
    if (!(s >= kMinNormalizationStd)) {
      warnings.push_back(std::string("column ") + name + "_" + std::to_string(c) +
                         " has (near) zero variance; standard deviation floored to 1e-8");
      s = kMinNormalizationStd;
    }
    mu[c] = mean;
    sd[c] = s;
  }
}

}  // namespace

NormalizationResult normalize_fit(const Dataset& data) {
  if (data.size() < 2) throw ConfigError("normalize_fit needs at least two rows");
  NormalizationResult r;
  column_stats(data.x, "x", r.stats.mu_x, r.stats.sigma_x, r.warnings);
  column_stats(data.y, "y", r.stats.mu_y, r.stats.sigma_y, r.warnings);
  r.normalized = r.stats.apply(data);
  return r;
}

}  // namespace cde
