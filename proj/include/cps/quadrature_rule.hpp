#pragma once

#include <vector>

namespace cps {

/// Nodes and weights of a fixed quadrature rule.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// Composite 20-point Gauss-Legendre rule with `panels` equal panels on [a, b].
QuadratureRule composite_gauss_legendre(double a, double b, int panels);

}  // namespace cps
