#include "cps/quadrature_rule.hpp"

#include <boost/math/quadrature/gauss.hpp>

namespace cps {

QuadratureRule composite_gauss_legendre(double a, double b, int panels) {
  using Rule = boost::math::quadrature::gauss<double, 20>;
  const auto& abscissa = Rule::abscissa();  // non-negative half
  const auto& weight = Rule::weights();

  QuadratureRule rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * 20);
  rule.weights.reserve(static_cast<std::size_t>(panels) * 20);
  const double width = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double center = a + (p + 0.5) * width;
    const double half = 0.5 * width;
    for (std::size_t i = 0; i < abscissa.size(); ++i) {
      // 20 points: no node at the origin, each abscissa gives a +/- pair.
      rule.nodes.push_back(center - half * abscissa[i]);
      rule.weights.push_back(half * weight[i]);
      rule.nodes.push_back(center + half * abscissa[i]);
      rule.weights.push_back(half * weight[i]);
    }
  }
  return rule;
}

}  // namespace cps
