#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace cde {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Rules are computed once per size (Newton iteration on P_n) and cached for
// the life of the process; the returned reference stays valid. Thread-safe.
const GaussLegendreRule& gauss_legendre(std::size_t n);

// Maps the rule onto [lo, hi] and returns the nodes and scaled weights.
void gauss_legendre_nodes(Interval support, std::size_t n, std::vector<double>& nodes,
                          std::vector<double>& weights);

double integrate(const std::function<double(double)>& f, Interval support, std::size_t n);

}  // namespace cde
