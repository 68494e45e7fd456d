#include "cde/quadrature.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "cde/errors.hpp"

namespace cde {

namespace {

GaussLegendreRule compute_rule(std::size_t n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double dn = static_cast<double>(n);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (dn + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double dk = static_cast<double>(k);
        const double p2 = ((2.0 * dk - 1.0) * x * p1 - (dk - 1.0) * p0) / dk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = dn * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

}  // namespace

const GaussLegendreRule& gauss_legendre(std::size_t n) {
  if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<GaussLegendreRule>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussLegendreRule>(compute_rule(n));
  return *slot;
}

void gauss_legendre_nodes(Interval support, std::size_t n, std::vector<double>& nodes,
                          std::vector<double>& weights) {
  const auto& rule = gauss_legendre(n);
  const double half = 0.5 * support.width();
  const double mid = 0.5 * (support.lo + support.hi);
  nodes.resize(n);
  weights.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    nodes[i] = mid + half * rule.nodes[i];
    weights[i] = half * rule.weights[i];
  }
}

double integrate(const std::function<double(double)>& f, Interval support, std::size_t n) {
  const auto& rule = gauss_legendre(n);
  const double half = 0.5 * support.width();
  const double mid = 0.5 * (support.lo + support.hi);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
  return half * sum;
}

}  // namespace cde
