#pragma once

#include <cmath>
#include <functional>
#include <limits>

namespace rsindex {

struct RootResult {
  double x = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Zero of a score function on [lo, hi] given score(lo) > 0 > score(hi), i.e.
// the bracket straddles a maximum of the underlying objective. Newton steps
// use a secant slope through the two most recent iterates; a step that leaves
// the bracket, or follows a step that failed to halve it, is replaced by
// bisection.
inline RootResult find_score_root(const std::function<double(double)>& score,
                                  double lo, double hi, double score_lo,
                                  double score_hi, double x_tol,
                                  int max_evaluations = 200) {
  RootResult out;
  double a = lo;
  double b = hi;
  double x_prev = lo, f_prev = score_lo;
  double x = hi, fx = score_hi;
  double last_width = std::numeric_limits<double>::infinity();

  while (out.evaluations < max_evaluations) {
    const double width = b - a;
    if (width <= x_tol * (1.0 + 0.5 * (std::abs(a) + std::abs(b)))) {
      out.converged = true;
      break;
    }
    double candidate = 0.5 * (a + b);
    if (width <= 0.5 * last_width) {
      const double slope = (fx - f_prev) / (x - x_prev);
      if (std::isfinite(slope) && slope != 0.0) {
        const double newton = x - fx / slope;
        if (newton > a && newton < b) candidate = newton;
      }
    }
    last_width = width;

    const double fc = score(candidate);
    ++out.evaluations;
    x_prev = x;
    f_prev = fx;
    x = candidate;
    fx = fc;
    if (fc == 0.0 || !std::isfinite(fc)) {
      if (fc == 0.0) {
        a = b = candidate;
        out.converged = true;
        break;
      }
      // Non-finite score: treat as overshoot towards the nearer end.
      b = candidate;
      continue;
    }
    if (fc > 0.0) {
      a = candidate;
    } else {
      b = candidate;
    }
  }
  out.x = 0.5 * (a + b);
  return out;
}

}  // namespace rsindex
