#include "homsurf/homogenize.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>

namespace homsurf::homogenize {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

double frac(double y) { return y - std::floor(y); }

void check_band(double v, double lo, double hi, const char* who) {
  if (!(v >= lo) || !(v <= hi)) {
    throw ConfigError(std::string(who) + ": sampled value " + std::to_string(v) +
                      " outside admissible band [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

// Biquadratic (9-node) elements on the uniform periodic cell grid: the
// bilinear space stalls against the interface-corner singularity of rough
// coefficients before the stated tolerances are reached.
//
// 1D quadratic Lagrange basis on nodes {0, 1/2, 1} and 3-point Gauss rule.
double lag2(int a, double x) {
  if (a == 0) return 2.0 * (x - 0.5) * (x - 1.0);
  if (a == 1) return -4.0 * x * (x - 1.0);
  return 2.0 * x * (x - 0.5);
}
double dlag2(int a, double x) {
  if (a == 0) return 4.0 * x - 3.0;
  if (a == 1) return -8.0 * x + 4.0;
  return 4.0 * x - 1.0;
}
const double kGaussX[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
const double kGaussW[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

// Reference gradients (times h) of the nine shape functions, local node
// (a, b) -> index b * 3 + a.
void q2_grads(double xi, double eta, Vec2 g[9]) {
  for (int b = 0; b < 3; ++b) {
    for (int a = 0; a < 3; ++a) {
      g[b * 3 + a] = {dlag2(a, xi) * lag2(b, eta), lag2(a, xi) * dlag2(b, eta)};
    }
  }
}

struct CellProblem2d {
  int n = 0;        // cells per period; the node lattice is (2n)^2
  double h = 0.0;
  SpMat K;          // pinned system (lattice node 0 removed)
  Eigen::VectorXd b[2];

  int node(int i, int j) const {
    const int g = 2 * n;
    return ((j % g + g) % g) * g + ((i % g + g) % g);
  }
};

CellProblem2d assemble_cell_2d(const PeriodicCoefficient& pc, const Vec2& x, int n) {
  CellProblem2d cp;
  cp.n = n;
  cp.h = 1.0 / n;

  const int ndof = 4 * n * n;
  Eigen::VectorXd b0 = Eigen::VectorXd::Zero(ndof);
  Eigen::VectorXd b1 = Eigen::VectorXd::Zero(ndof);
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(n) * n * 81);

  Vec2 g[9];
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Vec2 yc((i + 0.5) * cp.h, (j + 0.5) * cp.h);
      const Mat2 A = pc.A(x, yc);

      int id[9];
      for (int b = 0; b < 3; ++b) {
        for (int a = 0; a < 3; ++a) id[b * 3 + a] = cp.node(2 * i + a, 2 * j + b);
      }
      double Ke[9][9] = {};
      double be[2][9] = {};
      for (int qx = 0; qx < 3; ++qx) {
        for (int qy = 0; qy < 3; ++qy) {
          const double w = kGaussW[qx] * kGaussW[qy];
          q2_grads(kGaussX[qx], kGaussX[qy], g);
          for (int a = 0; a < 9; ++a) {
            const Vec2 Ag = A * g[a];
            for (int c = 0; c < 9; ++c) Ke[c][a] += w * g[c].dot(Ag);
            // -int A e_d . grad N_a; physical gradient g / h, cell area h^2
            be[0][a] -= w * cp.h * (A(0, 0) * g[a][0] + A(1, 0) * g[a][1]);
            be[1][a] -= w * cp.h * (A(0, 1) * g[a][0] + A(1, 1) * g[a][1]);
          }
        }
      }
      for (int a = 0; a < 9; ++a) {
        b0[id[a]] += be[0][a];
        b1[id[a]] += be[1][a];
        for (int c = 0; c < 9; ++c) trips.emplace_back(id[a], id[c], Ke[a][c]);
      }
    }
  }

  SpMat Kfull(ndof, ndof);
  Kfull.setFromTriplets(trips.begin(), trips.end());

  // Pin lattice node 0 (constants are the kernel), solve the reduced system.
  cp.K = Kfull.bottomRightCorner(ndof - 1, ndof - 1);
  cp.b[0] = b0.tail(ndof - 1);
  cp.b[1] = b1.tail(ndof - 1);
  return cp;
}

// Integral of a lattice function over Y (tensor Simpson weights are exact for
// the quadratic basis).
double lattice_mean_2d(const Eigen::VectorXd& phi, int n) {
  const int g = 2 * n;
  auto w1 = [](int idx) { return idx % 2 == 1 ? 2.0 / 3.0 : 1.0 / 3.0; };
  double acc = 0.0;
  for (int j = 0; j < g; ++j) {
    for (int i = 0; i < g; ++i) acc += w1(i) * w1(j) * phi[j * g + i];
  }
  return acc / (n * n);
}

Eigen::VectorXd solve_pinned(const SpMat& K, const Eigen::VectorXd& b, double tol,
                             double& residual, int& iterations) {
  Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper,
                           Eigen::DiagonalPreconditioner<double>>
      cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(40 * K.rows() + 1000);
  cg.compute(K);
  Eigen::VectorXd x = cg.solve(b);
  if (cg.info() != Eigen::Success && b.norm() > 0.0) {
    throw NumericError("cell solver breakdown: CG stopped after " +
                       std::to_string(cg.iterations()) + " iterations, relative residual " +
                       std::to_string(cg.error()));
  }
  residual = std::max(residual, cg.error());
  iterations = std::max(iterations, static_cast<int>(cg.iterations()));
  return x;
}

}  // namespace

Mat2 laminate_diag(const std::function<double(double)>& a,
                   const std::function<double(double)>& b, const QuadSpec& quad,
                   double lo, double hi) {
  auto checked = [lo, hi](const std::function<double(double)>& f, const char* who) {
    return [f, lo, hi, who](double y) {
      const double v = f(y);
      check_band(v, lo, hi, who);
      return v;
    };
  };
  const double arith = integrate(checked(a, "laminate_diag(a)"), 0.0, 1.0, quad);
  const double harm_inv =
      integrate([g = checked(b, "laminate_diag(b)")](double y) { return 1.0 / g(y); },
                0.0, 1.0, quad);
  Mat2 out = Mat2::Zero();
  out(0, 0) = arith;
  out(1, 1) = 1.0 / harm_inv;
  return out;
}

Mat2 laminate_general(const PeriodicCoefficient& pc, const Vec2& x,
                      const QuadSpec& quad) {
  auto entry = [&pc, &x](double y1, int i, int j) {
    return pc.A(x, Vec2(y1, 0.0))(i, j);
  };
  if (pc.dim == 1) {
    const double m = integrate([&](double y) { return 1.0 / entry(y, 0, 0); }, 0.0,
                               1.0, quad);
    Mat2 out = Mat2::Zero();
    out(0, 0) = 1.0 / m;
    return out;
  }
  const double m_inv =
      integrate([&](double y) { return 1.0 / entry(y, 0, 0); }, 0.0, 1.0, quad);
  const double m_10 = integrate(
      [&](double y) { return entry(y, 1, 0) / entry(y, 0, 0); }, 0.0, 1.0, quad);
  const double m_01 = integrate(
      [&](double y) { return entry(y, 0, 1) / entry(y, 0, 0); }, 0.0, 1.0, quad);
  const double m_schur = integrate(
      [&](double y) {
        return entry(y, 1, 1) - entry(y, 1, 0) * entry(y, 0, 1) / entry(y, 0, 0);
      },
      0.0, 1.0, quad);
  Mat2 out;
  out(0, 0) = 1.0 / m_inv;
  out(1, 0) = m_10 / m_inv;
  out(0, 1) = m_01 / m_inv;
  out(1, 1) = m_schur + m_10 * m_01 / m_inv;
  return out;
}

Corrector cell_solve(const PeriodicCoefficient& pc, const Vec2& x, int n_cell,
                     double tol) {
  if (n_cell < 4) throw ConfigError("cell_solve: n_cell must be >= 4");
  Corrector corr;
  corr.dim = pc.dim;
  corr.n_cell = n_cell;

  if (pc.dim == 1) {
    // Quadratic line elements on the 2n lattice.
    const int n = n_cell;
    const int g = 2 * n;
    const double h = 1.0 / n;
    std::vector<Triplet> trips;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(g);
    for (int i = 0; i < n; ++i) {
      const double ac = pc.A(x, Vec2((i + 0.5) * h, 0.0))(0, 0);
      const int id[3] = {2 * i, 2 * i + 1, (2 * i + 2) % g};
      for (int p = 0; p < 3; ++p) {
        for (int q = 0; q < 3; ++q) {
          double k = 0.0;
          for (int gp = 0; gp < 3; ++gp) {
            k += kGaussW[gp] * dlag2(p, kGaussX[gp]) * dlag2(q, kGaussX[gp]);
          }
          trips.emplace_back(id[p], id[q], ac / h * k);
        }
        // -int a e . N_p' dy = -a (N_p(1) - N_p(0))
        b[id[p]] -= ac * (lag2(p, 1.0) - lag2(p, 0.0));
      }
    }
    SpMat Kf(g, g);
    Kf.setFromTriplets(trips.begin(), trips.end());
    const SpMat Kp = Kf.bottomRightCorner(g - 1, g - 1);
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(g);
    phi.tail(g - 1) =
        solve_pinned(Kp, b.tail(g - 1), tol, corr.residual, corr.iterations);
    // zero mean with the Simpson lattice weights
    double mean = 0.0;
    for (int i = 0; i < g; ++i) mean += (i % 2 == 1 ? 2.0 : 1.0) / 3.0 * phi[i];
    phi.array() -= mean / n;
    corr.phi.push_back(std::move(phi));
    return corr;
  }

  const CellProblem2d cp = assemble_cell_2d(pc, x, n_cell);
  const int ndof = 4 * n_cell * n_cell;
  for (int d = 0; d < 2; ++d) {
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(ndof);
    phi.tail(ndof - 1) =
        solve_pinned(cp.K, cp.b[d], tol, corr.residual, corr.iterations);
    phi.array() -= lattice_mean_2d(phi, n_cell);
    corr.phi.push_back(std::move(phi));
  }
  return corr;
}

Mat2 homogenized_tensor(const PeriodicCoefficient& pc, const Vec2& x,
                        const Corrector& corr) {
  const int n = corr.n_cell;
  const double h = 1.0 / n;

  if (pc.dim == 1) {
    const auto& phi = corr.phi.at(0);
    const int g = 2 * n;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      const double ac = pc.A(x, Vec2((i + 0.5) * h, 0.0))(0, 0);
      // int over the cell of (1 + phi'); the midpoint basis integral drops
      acc += ac * (h + phi[(2 * i + 2) % g] - phi[2 * i]);
    }
    Mat2 out = Mat2::Zero();
    out(0, 0) = acc;
    return out;
  }

  const int lat = 2 * n;
  auto node = [lat](int i, int j) {
    return ((j % lat + lat) % lat) * lat + ((i % lat + lat) % lat);
  };

  Mat2 energy = Mat2::Zero();
  Mat2 flux = Mat2::Zero();
  bool symmetric = true;
  Vec2 g[9];
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const Mat2 A = pc.A(x, Vec2((i + 0.5) * h, (j + 0.5) * h));
      if (std::abs(A(0, 1) - A(1, 0)) > 1e-12 * (1.0 + A.cwiseAbs().maxCoeff())) {
        symmetric = false;
      }
      int id[9];
      for (int b = 0; b < 3; ++b) {
        for (int a = 0; a < 3; ++a) id[b * 3 + a] = node(2 * i + a, 2 * j + b);
      }
      for (int qx = 0; qx < 3; ++qx) {
        for (int qy = 0; qy < 3; ++qy) {
          q2_grads(kGaussX[qx], kGaussX[qy], g);
          Vec2 grad[2];  // e_d + physical corrector gradient
          for (int d = 0; d < 2; ++d) {
            grad[d] = Vec2::Zero();
            for (int a = 0; a < 9; ++a) grad[d] += corr.phi[d][id[a]] * g[a];
            grad[d] /= h;
            grad[d][d] += 1.0;
          }
          const double w = kGaussW[qx] * kGaussW[qy] * h * h;
          for (int c = 0; c < 2; ++c) {
            const Vec2 Agc = A * grad[c];
            flux.col(c) += w * Agc;
            for (int r = 0; r < 2; ++r) energy(r, c) += w * grad[r].dot(Agc);
          }
        }
      }
    }
  }
  // For symmetric coefficients the energy form equals the flux formula at
  // convergence and keeps the Voigt-Reuss sandwich exact for the discrete
  // corrector; keep the flux formula for the non-symmetric case.
  return symmetric ? Mat2(0.5 * (energy + energy.transpose())) : flux;
}

Mat2 homogenize_cell(const PeriodicCoefficient& pc, const Vec2& x, int n_cell,
                     double tol) {
  const Corrector corr = cell_solve(pc, x, n_cell, tol);
  return homogenized_tensor(pc, x, corr);
}

PeriodicCoefficient shift_invariance_data(const PeriodicCoefficient& pc, double r) {
  PeriodicCoefficient out = pc;
  auto inner = pc.A;
  const int dim = pc.dim;
  out.A = [inner, r, dim](const Vec2& x, const Vec2& y) {
    Vec2 ys = y;
    ys[0] = frac(ys[0] + r);
    if (dim == 2) ys[1] = frac(ys[1] + r);
    return inner(x, ys);
  };
  return out;
}

std::pair<Mat2, Mat2> voigt_reuss_means(const PeriodicCoefficient& pc,
                                        const Vec2& x, int n_cell) {
  const double h = 1.0 / n_cell;
  Mat2 arith = Mat2::Zero();
  Mat2 harm_inv = Mat2::Zero();
  for (int j = 0; j < (pc.dim == 1 ? 1 : n_cell); ++j) {
    for (int i = 0; i < n_cell; ++i) {
      const Mat2 A = pc.A(x, Vec2((i + 0.5) * h, (j + 0.5) * h));
      arith += A;
      harm_inv += A.inverse();
    }
  }
  const double cnt = pc.dim == 1 ? n_cell : n_cell * n_cell;
  arith /= cnt;
  harm_inv /= cnt;
  return {Mat2(harm_inv.inverse()), arith};
}

// ---------------------------------------------------------------------------
// Scenario limit profiles
// ---------------------------------------------------------------------------

namespace {

using geometry::Scenario;
using geometry::ScenarioKind;

const QuadSpec kProfileQuad{1e-10, 20};

double profile_mean(const geometry::OscProfile& prof,
                    const std::function<double(double)>& integrand) {
  return periodic_mean(integrand, prof.period, kProfileQuad);
}

// rho0 of the concentric corrugation around one bump.
double bump_rho0_impl(const Scenario& s, double radius, double t) {
  const auto& prof = s.profile;
  const double psi = geometry::bump_cutoff(t, radius);
  return t * profile_mean(prof, [&prof, psi](double y) {
           const double d = prof.df(y) * psi;
           return std::sqrt(d * d + 1.0);
         });
}

double bump_drho0_impl(const Scenario& s, double radius, double t) {
  const auto& prof = s.profile;
  const double psi = geometry::bump_cutoff(t, radius);
  const double dpsi = geometry::bump_cutoff_derivative(t, radius);
  const double mean = profile_mean(prof, [&prof, psi](double y) {
    const double d = prof.df(y) * psi;
    return std::sqrt(d * d + 1.0);
  });
  const double dmean = profile_mean(prof, [&prof, psi, dpsi](double y) {
    const double fp = prof.df(y);
    const double d = fp * psi;
    return fp * fp * psi * dpsi / std::sqrt(d * d + 1.0);
  });
  return mean + t * dmean;
}

Interval untruncated_range(const Scenario& s) {
  switch (s.kind) {
    case ScenarioKind::star_graph:
    case ScenarioKind::radial_graph:
      return {0.0, s.params.R};
    case ScenarioKind::sphere_longitude:
    case ScenarioKind::sphere_latitude:
      return {0.0, pi};
    case ScenarioKind::local_bumps:
      return {0.0, std::max(s.domain.range1.length(), s.domain.range2.length())};
    case ScenarioKind::strip_laminate:
      return {0.0, 1.0};
  }
  return {0.0, 1.0};
}

}  // namespace

double rho0_bump_profile(const Scenario& s, double radius, double t) {
  return bump_rho0_impl(s, radius, t);
}

double rho0_bump_derivative(const Scenario& s, double radius, double t) {
  return bump_drho0_impl(s, radius, t);
}

double rho0_profile(const Scenario& s, double t) {
  const auto& prof = s.profile;
  const Interval range = untruncated_range(s);
  if (!range.contains(t, 1e-12)) {
    throw ConfigError("rho0_profile: t = " + std::to_string(t) +
                      " outside coordinate range [" + std::to_string(range.lo) +
                      ", " + std::to_string(range.hi) + "]");
  }
  switch (s.kind) {
    case ScenarioKind::star_graph:
      return profile_mean(prof, [&prof, t](double y) {
        const double d = prof.df(y);
        return std::sqrt(d * d + t * t);
      });
    case ScenarioKind::sphere_longitude: {
      const double s2 = std::sin(t) * std::sin(t);
      return profile_mean(prof, [&prof, s2](double y) {
        const double d = prof.df(y);
        return std::sqrt(d * d + s2);
      });
    }
    case ScenarioKind::radial_graph:
      return t * profile_mean(prof, [&prof](double y) {
               const double d = prof.df(y);
               return std::sqrt(d * d + 1.0);
             });
    case ScenarioKind::sphere_latitude:
      return std::sin(t) * profile_mean(prof, [&prof](double y) {
               const double d = prof.df(y);
               return std::sqrt(d * d + 1.0);
             });
    case ScenarioKind::local_bumps:
      return bump_rho0_impl(s, s.params.bumps.at(0).radius, t);
    case ScenarioKind::strip_laminate:
      return 1.0;
  }
  throw ConfigError("rho0_profile: unhandled scenario");
}

double rho0_derivative(const Scenario& s, double t) {
  const auto& prof = s.profile;
  switch (s.kind) {
    case ScenarioKind::star_graph:
      return profile_mean(prof, [&prof, t](double y) {
        const double d = prof.df(y);
        const double denom = std::sqrt(d * d + t * t);
        // 0/0 at (t, f') = (0, 0): limit along f' = 0
        return denom > 0.0 ? t / denom : 1.0;
      });
    case ScenarioKind::sphere_longitude: {
      const double sc = std::sin(t) * std::cos(t);
      const double s2 = std::sin(t) * std::sin(t);
      return profile_mean(prof, [&prof, sc, s2, t](double y) {
        const double d = prof.df(y);
        const double denom = std::sqrt(d * d + s2);
        return denom > 0.0 ? sc / denom : std::cos(t);
      });
    }
    case ScenarioKind::radial_graph:
      return profile_mean(prof, [&prof](double y) {
        const double d = prof.df(y);
        return std::sqrt(d * d + 1.0);
      });
    case ScenarioKind::sphere_latitude:
      return std::cos(t) * profile_mean(prof, [&prof](double y) {
               const double d = prof.df(y);
               return std::sqrt(d * d + 1.0);
             });
    case ScenarioKind::local_bumps:
      return bump_drho0_impl(s, s.params.bumps.at(0).radius, t);
    case ScenarioKind::strip_laminate:
      return 0.0;
  }
  throw ConfigError("rho0_derivative: unhandled scenario");
}

Profile limit_profile(const Scenario& s) {
  Profile p;
  p.range = untruncated_range(s);
  // Point evaluations repeat heavily on structured meshes; memoize.
  auto cache = std::make_shared<std::map<double, double>>();
  auto dcache = std::make_shared<std::map<double, double>>();
  auto mtx = std::make_shared<std::mutex>();
  p.rho0 = [s, cache, mtx](double t) {
    {
      std::lock_guard<std::mutex> lock(*mtx);
      auto it = cache->find(t);
      if (it != cache->end()) return it->second;
    }
    const double v = rho0_profile(s, t);
    std::lock_guard<std::mutex> lock(*mtx);
    cache->emplace(t, v);
    return v;
  };
  p.drho0 = [s, dcache, mtx](double t) {
    {
      std::lock_guard<std::mutex> lock(*mtx);
      auto it = dcache->find(t);
      if (it != dcache->end()) return it->second;
    }
    const double v = rho0_derivative(s, t);
    std::lock_guard<std::mutex> lock(*mtx);
    dcache->emplace(t, v);
    return v;
  };
  return p;
}

// ---------------------------------------------------------------------------
// Homogenized fields
// ---------------------------------------------------------------------------

namespace {

geometry::CoefficientField certify_over_domain(
    std::function<Mat2(const Vec2&)> A, std::function<double(const Vec2&)> rho,
    const geometry::ParamDomain& dom, int grid = 64) {
  geometry::CoefficientField cf;
  cf.A = std::move(A);
  cf.rho = std::move(rho);
  double lam = std::numeric_limits<double>::infinity();
  double Lam = 0.0;
  for (int i = 0; i <= grid; ++i) {
    for (int j = 0; j <= grid; ++j) {
      const Vec2 p(dom.range1.lo + dom.range1.length() * i / grid,
                   dom.range2.lo + dom.range2.length() * j / grid);
      Eigen::SelfAdjointEigenSolver<Mat2> es(cf.A(p));
      lam = std::min(lam, es.eigenvalues()(0));
      Lam = std::max(Lam, es.eigenvalues()(1));
    }
  }
  cf.lambda_ell = lam;
  cf.Lambda_ell = Lam;
  return cf;
}

// Nearest bump and distance for a local_bumps point.
std::pair<const geometry::BumpSpec*, double> nearest_bump(const Scenario& s,
                                                          const Vec2& p) {
  const geometry::BumpSpec* best = nullptr;
  double best_r = std::numeric_limits<double>::infinity();
  for (const auto& b : s.params.bumps) {
    const double r = (p - b.center).norm();
    if (r < best_r) {
      best_r = r;
      best = &b;
    }
  }
  return {best, best_r};
}

Mat2 radial_frame_matrix(const Vec2& dir, double radial, double angular) {
  const Vec2 er = dir.normalized();
  const Vec2 ea(-er[1], er[0]);
  return radial * er * er.transpose() + angular * ea * ea.transpose();
}

}  // namespace

geometry::CoefficientField limit_coefficient(const Scenario& s) {
  const Profile prof = limit_profile(s);
  const auto rho0 = prof.rho0;

  switch (s.kind) {
    case ScenarioKind::star_graph:
    case ScenarioKind::sphere_longitude: {
      auto A = [rho0](const Vec2& p) {
        const double r = rho0(p[0]);
        Mat2 m = Mat2::Zero();
        m(0, 0) = r;
        m(1, 1) = 1.0 / r;
        return m;
      };
      auto rho = [rho0](const Vec2& p) { return rho0(p[0]); };
      return certify_over_domain(A, rho, s.domain);
    }
    case ScenarioKind::radial_graph: {
      auto A = [rho0](const Vec2& p) {
        const double t = p[0], r = rho0(t);
        Mat2 m = Mat2::Zero();
        m(0, 0) = t * t / r;
        m(1, 1) = r / (t * t);
        return m;
      };
      auto rho = [rho0](const Vec2& p) { return rho0(p[0]); };
      return certify_over_domain(A, rho, s.domain);
    }
    case ScenarioKind::sphere_latitude: {
      auto A = [rho0](const Vec2& p) {
        const double st = std::sin(p[0]), r = rho0(p[0]);
        Mat2 m = Mat2::Zero();
        m(0, 0) = st * st / r;
        m(1, 1) = r / (st * st);
        return m;
      };
      auto rho = [rho0](const Vec2& p) { return rho0(p[0]); };
      return certify_over_domain(A, rho, s.domain);
    }
    case ScenarioKind::local_bumps: {
      const Scenario sc = s;
      auto A = [sc](const Vec2& p) -> Mat2 {
        const auto [b, r] = nearest_bump(sc, p);
        if (b == nullptr || r >= b->radius || r < 1e-14) return Mat2::Identity();
        const double rho = bump_rho0_impl(sc, b->radius, r);
        return radial_frame_matrix(p - b->center, r / rho, rho / r);
      };
      auto rho = [sc](const Vec2& p) -> double {
        const auto [b, r] = nearest_bump(sc, p);
        if (b == nullptr || r >= b->radius || r < 1e-14) return 1.0;
        return bump_rho0_impl(sc, b->radius, r) / r;
      };
      return certify_over_domain(A, rho, s.domain);
    }
    case ScenarioKind::strip_laminate: {
      const double a0 = s.params.strip_phases[0];
      const double a1 = s.params.strip_phases[1];
      const double harm = 2.0 * a0 * a1 / (a0 + a1);
      const double arith = 0.5 * (a0 + a1);
      auto A = [harm, arith](const Vec2&) {
        Mat2 m = Mat2::Zero();
        m(0, 0) = harm;
        m(1, 1) = arith;
        return m;
      };
      auto rho = [](const Vec2&) { return 1.0; };
      return certify_over_domain(A, rho, s.domain, 2);
    }
  }
  throw ConfigError("limit_coefficient: unhandled scenario");
}

PeriodicCoefficient scenario_cell_coefficient(const Scenario& s) {
  PeriodicCoefficient pc;
  pc.dim = 2;
  const auto prof = s.profile;
  const double T = prof.period;

  switch (s.kind) {
    case ScenarioKind::star_graph:
    case ScenarioKind::sphere_longitude: {
      // Laminate along the angular cell coordinate y2.
      const bool sphere = s.kind == ScenarioKind::sphere_longitude;
      pc.A = [prof, T, sphere](const Vec2& x, const Vec2& y) {
        const double base = sphere ? std::sin(x[0]) : x[0];
        const double d = prof.df(T * y[1]);
        const double a = std::sqrt(base * base + d * d);
        Mat2 m = Mat2::Zero();
        m(0, 0) = a;
        m(1, 1) = 1.0 / a;
        return m;
      };
      break;
    }
    case ScenarioKind::radial_graph:
    case ScenarioKind::sphere_latitude: {
      // Laminate along the radial/latitude cell coordinate y1.
      const bool sphere = s.kind == ScenarioKind::sphere_latitude;
      pc.A = [prof, T, sphere](const Vec2& x, const Vec2& y) {
        const double base = sphere ? std::sin(x[0]) : x[0];
        const double d = prof.df(T * y[0]);
        const double q = std::sqrt(d * d + 1.0);
        Mat2 m = Mat2::Zero();
        m(0, 0) = base / q;
        m(1, 1) = q / base;
        return m;
      };
      break;
    }
    case ScenarioKind::local_bumps: {
      // Concentric laminate expressed in the local (radial, angular) frame of
      // the nearest bump; x is the Cartesian macro point.
      const Scenario sc = s;
      pc.A = [sc, prof, T](const Vec2& x, const Vec2& y) -> Mat2 {
        const auto [b, r] = nearest_bump(sc, x);
        Mat2 m = Mat2::Identity();
        if (b == nullptr || r >= b->radius || r < 1e-14) return m;
        const double psi = geometry::bump_cutoff(r, b->radius);
        const double d = prof.df(T * y[0]) * psi;
        const double q = std::sqrt(d * d + 1.0);
        m(0, 0) = 1.0 / q;
        m(1, 1) = q;
        return m;
      };
      break;
    }
    case ScenarioKind::strip_laminate: {
      const double a0 = s.params.strip_phases[0];
      const double a1 = s.params.strip_phases[1];
      pc.A = [a0, a1](const Vec2&, const Vec2& y) {
        return (frac(y[0]) < 0.5 ? a0 : a1) * Mat2::Identity();
      };
      pc.x_independent = true;
      break;
    }
  }
  return pc;
}

geometry::CoefficientField limit_coefficient_cell(const Scenario& s, int n_cell) {
  const PeriodicCoefficient pc = scenario_cell_coefficient(s);
  const geometry::CoefficientField closed = limit_coefficient(s);
  const Scenario sc = s;

  auto cache = std::make_shared<std::map<double, Mat2>>();
  auto mtx = std::make_shared<std::mutex>();

  auto hom_at = [pc, n_cell, cache, mtx](double key, const Vec2& x) -> Mat2 {
    {
      std::lock_guard<std::mutex> lock(*mtx);
      auto it = cache->find(key);
      if (it != cache->end()) return it->second;
    }
    const Mat2 H = homogenize_cell(pc, x, n_cell);
    std::lock_guard<std::mutex> lock(*mtx);
    cache->emplace(key, H);
    return H;
  };

  // The macro dependence of the built-in cells is through one scalar: the
  // first coordinate, or the distance to the nearest bump.
  const bool x_indep = pc.x_independent;
  auto A = [sc, hom_at, x_indep](const Vec2& p) -> Mat2 {
    if (sc.kind == ScenarioKind::local_bumps) {
      const auto [b, r] = nearest_bump(sc, p);
      if (b == nullptr || r >= b->radius || r < 1e-14) return Mat2::Identity();
      const Mat2 H = hom_at(r, p);
      return radial_frame_matrix(p - b->center, H(0, 0), H(1, 1));
    }
    return hom_at(x_indep ? 0.0 : p[0], p);
  };

  geometry::CoefficientField cf;
  cf.A = A;
  cf.rho = closed.rho;
  cf.lambda_ell = closed.lambda_ell;
  cf.Lambda_ell = closed.Lambda_ell;
  return cf;
}

}  // namespace homsurf::homogenize
