// numerics.hpp - thin adaptive-quadrature layer over Boost.Math.

#pragma once

#include <algorithm>
#include <limits>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace restartq::numerics {

// Adaptive Gauss-Kronrod over [a, b], split at the sorted `breaks` that fall
// inside the interval. `rel_tol` is relative to the L1 norm of each piece.
template <typename F>
double integrate(F f, double a, double b, const std::vector<double>& breaks = {},
                 double rel_tol = 1e-13, unsigned max_depth = 20) {
  if (!(b > a)) return 0.0;
  std::vector<double> pts{a};
  for (double x : breaks)
    if (x > a && x < b) pts.push_back(x);
  pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

  double total = 0.0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
    // The rule's error estimate never drops below a few ulps in absolute
    // terms, so a small piece cannot meet a tight relative tolerance.
    double err = 0.0, l1 = 0.0;
    GK::integrate(f, pts[k], pts[k + 1], 0, rel_tol, &err, &l1);
    const double tol = std::max(rel_tol, 64.0 * std::numeric_limits<double>::epsilon() / std::max(l1, 1e-300));
    total += GK::integrate(f, pts[k], pts[k + 1], max_depth, tol, &err);
  }
  return total;
}

// Smallest x in [lo, hi] with pred(x) true, assuming pred is monotone
// false -> true. Stops at relative width `rel_tol`.
template <typename Pred>
double bisect(Pred pred, double lo, double hi, double rel_tol = 1e-10) {
  for (int it = 0; it < 400 && (hi - lo) > rel_tol * std::max(std::abs(hi), 1e-300); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace restartq::numerics
