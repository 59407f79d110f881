#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "homsurf/geometry.hpp"
#include "homsurf/quadrature.hpp"
#include "homsurf/types.hpp"

namespace homsurf::homogenize {

// Y-periodic coefficient A(x, y) on the unit cell Y = [0,1)^dim. For dim = 1
// only the (0,0) entry and the first cell coordinate are used.
struct PeriodicCoefficient {
  int dim = 2;
  std::function<Mat2(const Vec2& x, const Vec2& y)> A;
  bool x_independent = false;  // corrector cache hint
};

// Nodal corrector values phi_j on the periodic cell lattice, zero mean.
// n_cell counts elements per period; the quadratic elements carry their
// nodes on the (2 n_cell)^dim lattice.
struct Corrector {
  int dim = 2;
  int n_cell = 0;
  std::vector<Eigen::VectorXd> phi;  // one vector per direction
  double residual = 0.0;             // worst CG relative residual
  int iterations = 0;                // worst CG iteration count
};

// diag(arithmetic mean of a, harmonic mean of b) for 1-periodic samplers,
// the closed form for a diagonal coefficient oscillating along the second
// coordinate. Sampled values must stay in [lo, hi].
Mat2 laminate_diag(const std::function<double(double)>& a,
                   const std::function<double(double)>& b,
                   const QuadSpec& quad = {}, double lo = 1e-12,
                   double hi = 1e12);

// Homogenized tensor of a coefficient varying only in y1, assembled from the
// four weak-* mean formulas by 1D quadrature.
Mat2 laminate_general(const PeriodicCoefficient& pc, const Vec2& x = Vec2::Zero(),
                      const QuadSpec& quad = {});

// Periodic cell problems at a fixed macro point: quadratic elements on a
// uniform n_cell^dim grid, CG with diagonal preconditioning.
Corrector cell_solve(const PeriodicCoefficient& pc, const Vec2& x, int n_cell,
                     double tol = 1e-12);

// A_hom e_j = int_Y A (grad phi_j + e_j).
Mat2 homogenized_tensor(const PeriodicCoefficient& pc, const Vec2& x,
                        const Corrector& corr);

// Convenience: cell_solve + homogenized_tensor.
Mat2 homogenize_cell(const PeriodicCoefficient& pc, const Vec2& x, int n_cell,
                     double tol = 1e-12);

// Coefficient shifted along the cell diagonal: A'(x, y) = A(x, y + r*(1,..,1)).
PeriodicCoefficient shift_invariance_data(const PeriodicCoefficient& pc, double r);

// Arithmetic- and harmonic-mean quadratic forms of A(x, .) over the cell,
// sampled on the same n x n centers the cell solver uses.
std::pair<Mat2, Mat2> voigt_reuss_means(const PeriodicCoefficient& pc,
                                        const Vec2& x, int n_cell);

// ---------------------------------------------------------------------------
// Limit profiles and homogenized fields of the built-in scenarios
// ---------------------------------------------------------------------------

// rho0 integral of the scenario at coordinate t (adaptive quadrature, 1e-10).
double rho0_profile(const geometry::Scenario& s, double t);
// d/dt rho0, differentiating under the integral sign.
double rho0_derivative(const geometry::Scenario& s, double t);

// Per-bump concentric profile of local_bumps (rho0_profile uses the first
// bump's radius).
double rho0_bump_profile(const geometry::Scenario& s, double radius, double t);
double rho0_bump_derivative(const geometry::Scenario& s, double radius, double t);

struct Profile {
  std::function<double(double)> rho0;
  std::function<double(double)> drho0;
  Interval range;  // untruncated coordinate range the integrals are valid on
};

Profile limit_profile(const geometry::Scenario& s);

// Closed-form homogenized chart coefficient A0 and limit density of the
// scenario (the laminate means evaluated per point).
geometry::CoefficientField limit_coefficient(const geometry::Scenario& s);

// Same field with A0 obtained from periodic cell problems instead of the
// closed form; used to cross-validate the laminate route. Cell solves are
// memoized on the quantized macro coordinate.
geometry::CoefficientField limit_coefficient_cell(const geometry::Scenario& s,
                                                  int n_cell = 128);

// The local cell coefficient of the scenario at macro point p: the
// one-directional laminate the fine field approaches as eps -> 0.
PeriodicCoefficient scenario_cell_coefficient(const geometry::Scenario& s);

}  // namespace homsurf::homogenize
