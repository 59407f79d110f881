#include "homsurf/quadrature.hpp"

#include <cmath>

namespace homsurf {

namespace {

struct Panel {
  double fa, fm, fb;
  double simpson;
};

struct Work {
  const std::function<double(double)>& f;
  long budget;       // remaining subdivisions
  double est_error;  // accumulated estimate at accepted leaves
};

Panel make_panel(const std::function<double(double)>& f, double a, double b,
                 double fa, double fb) {
  Panel p;
  p.fa = fa;
  p.fb = fb;
  p.fm = f(0.5 * (a + b));
  p.simpson = (b - a) / 6.0 * (fa + 4.0 * p.fm + fb);
  return p;
}

double adapt(Work& w, double a, double b, const Panel& whole, double tol,
             int depth) {
  const double m = 0.5 * (a + b);
  const Panel left = make_panel(w.f, a, m, whole.fa, whole.fm);
  const Panel right = make_panel(w.f, m, b, whole.fm, whole.fb);
  const double two = left.simpson + right.simpson;
  const double err = (two - whole.simpson) / 15.0;
  if (std::abs(err) <= tol || depth <= 0 || w.budget <= 0) {
    w.est_error += std::abs(err);
    return two + err;
  }
  w.budget -= 2;
  return adapt(w, a, m, left, 0.5 * tol, depth - 1) +
         adapt(w, m, b, right, 0.5 * tol, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 const QuadSpec& spec) {
  if (a == b) return 0.0;
  // Initial panels split at golden-ratio fractions: bisection alone samples
  // only dyadic points, which can all coincide with zeros of periodic
  // integrands and fake convergence.
  const double cuts[5] = {0.0, 0.30901699437494742, 0.5, 0.80901699437494742, 1.0};
  const int depth_cap = 48;
  Work w{f, 1L << spec.max_depth, 0.0};
  double value = 0.0;
  for (int s = 0; s < 4; ++s) {
    const double pa = a + (b - a) * cuts[s];
    const double pb = a + (b - a) * cuts[s + 1];
    const double fa = f(pa);
    const double fb = f(pb);
    if (!std::isfinite(fa) || !std::isfinite(fb)) {
      throw NumericError("quadrature: non-finite integrand sample");
    }
    const Panel panel = make_panel(f, pa, pb, fa, fb);
    value += adapt(w, pa, pb, panel, 0.25 * spec.abs_tol, depth_cap);
  }
  if (!(w.est_error <= 2.0 * spec.abs_tol)) {
    throw NumericError("quadrature: estimated error " + std::to_string(w.est_error) +
                       " above tolerance " + std::to_string(spec.abs_tol) +
                       " within the subdivision budget");
  }
  if (!std::isfinite(value)) {
    throw NumericError("quadrature: non-finite result");
  }
  return value;
}

double periodic_mean(const std::function<double(double)>& f, double period,
                     const QuadSpec& spec) {
  if (period <= 0.0) throw ConfigError("periodic_mean: period must be positive");
  return integrate(f, 0.0, period, spec) / period;
}

}  // namespace homsurf
