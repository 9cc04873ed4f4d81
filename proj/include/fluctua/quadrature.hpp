#pragma once

// Globally adaptive Gauss-Kronrod (G7/K15) integration for value types that
// form a vector space (double, Eigen matrices/arrays). Node tables come from
// Boost.Math; the driver exists because Boost's own integrate() only handles
// scalar results, and tensor integrands must share their evaluation points.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace fluctua::quadrature {

struct Panel {
  double lo = 0.0;
  double hi = 0.0;  // may be +infinity
};

template <class V>
struct Outcome {
  V value{};
  double error = 0.0;
  int evaluations = 0;
  bool converged = false;
};

struct Budget {
  double rel_tol = 1e-8;
  double abs_tol = 0.0;
  int max_intervals = 4000;
  bool adaptive = true;
};

/// Builds panels between sorted, deduplicated breakpoints inside (lo, hi).
inline std::vector<Panel> panels_between(double lo, double hi,
                                         std::vector<double> breaks) {
  breaks.erase(std::remove_if(breaks.begin(), breaks.end(),
                              [&](double b) { return !(b > lo && b < hi); }),
               breaks.end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<Panel> out;
  double left = lo;
  for (double b : breaks) {
    out.push_back({left, b});
    left = b;
  }
  out.push_back({left, hi});
  return out;
}

namespace detail {

template <class V>
struct Interval {
  double a;  // in the (possibly mapped) integration variable
  double b;
  bool mapped;  // x = origin + t/(1-t)
  double origin;
  V value;
  double error;
};

template <class V, class F, class Norm>
Interval<V> apply_rule(F& f, Norm& norm, double a, double b, bool mapped,
                       double origin, int& evaluations) {
  using Kronrod = boost::math::quadrature::gauss_kronrod<double, 15>;
  using Gauss = boost::math::quadrature::gauss<double, 7>;
  const auto& xk = Kronrod::abscissa();
  const auto& wk = Kronrod::weights();
  const auto& wg = Gauss::weights();

  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  auto eval = [&](double t) {
    ++evaluations;
    if (!mapped) return V(f(t));
    const double s = 1.0 - t;
    return V(f(origin + t / s) * (1.0 / (s * s)));
  };

  const V center = eval(mid);
  V kronrod = center * wk[0];
  V gauss = center * wg[0];
  for (std::size_t i = 1; i < xk.size(); ++i) {
    const double dx = half * xk[i];
    const V pair = eval(mid - dx) + eval(mid + dx);
    kronrod = kronrod + pair * wk[i];
    if (i % 2 == 0) gauss = gauss + pair * wg[i / 2];
  }
  kronrod = kronrod * half;
  gauss = gauss * half;
  const double err = norm(V(kronrod - gauss));
  return {a, b, mapped, origin, kronrod, err};
}

}  // namespace detail

/// Integrates f over the union of panels. `zero` fixes the value shape,
/// `norm` maps a value to a non-negative scalar used for error control.
template <class V, class F, class Norm>
Outcome<V> integrate(F f, const std::vector<Panel>& panels, const V& zero,
                     Norm norm, const Budget& budget) {
  using Item = detail::Interval<V>;
  Outcome<V> out;
  out.value = zero;
  std::vector<Item> items;
  items.reserve(panels.size() * 4);
  for (const auto& p : panels) {
    if (std::isinf(p.hi)) {
      items.push_back(detail::apply_rule<V>(f, norm, 0.0, 1.0, true, p.lo,
                                            out.evaluations));
    } else if (p.hi > p.lo) {
      items.push_back(detail::apply_rule<V>(f, norm, p.lo, p.hi, false, 0.0,
                                            out.evaluations));
    }
  }

  auto total = [&]() {
    V sum = zero;
    double err = 0.0;
    for (const auto& it : items) {
      sum = sum + it.value;
      err += it.error;
    }
    return std::pair<V, double>(sum, err);
  };

  auto [sum, err] = total();
  const auto target = [&](const V& s) {
    return std::max(budget.abs_tol, budget.rel_tol * norm(s));
  };
  while (budget.adaptive && err > target(sum) &&
         static_cast<int>(items.size()) < budget.max_intervals) {
    auto worst = std::max_element(
        items.begin(), items.end(),
        [](const Item& l, const Item& r) { return l.error < r.error; });
    const Item victim = *worst;
    const double mid = 0.5 * (victim.a + victim.b);
    if (!(mid > victim.a && mid < victim.b)) break;  // cannot split further
    *worst = detail::apply_rule<V>(f, norm, victim.a, mid, victim.mapped,
                                   victim.origin, out.evaluations);
    items.push_back(detail::apply_rule<V>(f, norm, mid, victim.b, victim.mapped,
                                          victim.origin, out.evaluations));
    std::tie(sum, err) = total();
  }
  out.value = sum;
  out.error = err;
  out.converged = err <= target(sum);
  return out;
}

}  // namespace fluctua::quadrature
