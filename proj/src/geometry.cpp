#include "homsurf/geometry.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>

namespace homsurf::geometry {

namespace {

std::string point_str(const Vec2& p) {
  std::ostringstream os;
  os << "(" << p[0] << ", " << p[1] << ")";
  return os.str();
}

// Eigenvalues of a symmetric 2x2 matrix, ascending.
std::pair<double, double> sym_eigenvalues(const Mat2& S) {
  const double tr = S(0, 0) + S(1, 1);
  const double det = S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0);
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  return {0.5 * tr - disc, 0.5 * tr + disc};
}

}  // namespace

OscProfile sin2_profile(double period) {
  OscProfile p;
  p.name = "sin2";
  p.period = period;
  p.f = [](double y) { const double s = std::sin(y); return s * s; };
  p.df = [](double y) { return std::sin(2.0 * y); };
  return p;
}

OscProfile sin_profile(double period) {
  OscProfile p;
  p.name = "sin";
  p.period = period;
  p.f = [](double y) { return std::sin(y); };
  p.df = [](double y) { return std::cos(y); };
  return p;
}

OscProfile zero_profile(double period) {
  OscProfile p;
  p.name = "zero";
  p.period = period;
  return p;
}

OscProfile profile_by_name(const std::string& name, double period) {
  if (name == "sin2") return sin2_profile(period);
  if (name == "sin") return sin_profile(period);
  if (name == "zero") return zero_profile(period);
  throw ConfigError("unknown profile '" + name + "' (valid: sin2, sin, zero)");
}

Mat2 pullback(const Immersion& imm, const Vec2& p) {
  const Mat32 J = imm.jac(p);
  const Mat2 G = J.transpose() * J;
  const auto [lo, hi] = sym_eigenvalues(G);
  if (!(lo > 1e-14 * std::max(1.0, hi))) {
    throw NumericError("immersion degenerate at p = " + point_str(p) +
                       " (rank-deficient Jacobian, det G = " +
                       std::to_string(G.determinant()) + ")");
  }
  return G;
}

CoefficientField pullback_field(const Immersion& imm, const ParamDomain& dom,
                                const CertifyOpts& opts) {
  // Certify by sampling singular values of the Jacobian on a dense grid.
  double sv_min = std::numeric_limits<double>::infinity();
  double sv_max = 0.0;
  double lam = std::numeric_limits<double>::infinity();
  double Lam = 0.0;
  const int n = std::max(2, opts.grid);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const Vec2 p(dom.range1.lo + dom.range1.length() * i / n,
                   dom.range2.lo + dom.range2.length() * j / n);
      const Mat2 G = pullback(imm, p);
      const auto [g_lo, g_hi] = sym_eigenvalues(G);
      sv_min = std::min(sv_min, std::sqrt(g_lo));
      sv_max = std::max(sv_max, std::sqrt(g_hi));
      const double rho = std::sqrt(g_lo * g_hi);
      lam = std::min(lam, rho / g_hi);
      Lam = std::max(Lam, rho / g_lo);
    }
  }
  if (opts.C0 > 0.0 && (sv_min < 1.0 / opts.C0 || sv_max > opts.C0)) {
    throw ConfigError("ellipticity certification failed: sampled singular values [" +
                      std::to_string(sv_min) + ", " + std::to_string(sv_max) +
                      "] leave the declared band [1/" + std::to_string(opts.C0) +
                      ", " + std::to_string(opts.C0) + "]");
  }

  CoefficientField cf;
  cf.lambda_ell = lam;
  cf.Lambda_ell = Lam;
  cf.A = [imm](const Vec2& p) -> Mat2 {
    const Mat2 G = pullback(imm, p);
    const double rho = std::sqrt(G.determinant());
    return rho * G.inverse();
  };
  cf.rho = [imm](const Vec2& p) {
    return std::sqrt(pullback(imm, p).determinant());
  };
  return cf;
}

CoefficientField chart_coefficient(const std::function<Mat2(const Vec2&)>& L,
                                   const std::function<double(const Vec2&)>& rho,
                                   const std::function<Mat2(const Vec2&)>& g_ij,
                                   const ParamDomain& dom, int grid) {
  auto eval = [L, rho, g_ij](const Vec2& p) -> Mat2 {
    const Mat2 g = g_ij(p);
    const auto [g_lo, g_hi] = sym_eigenvalues(g);
    if (!(g_lo > 0.0) || std::abs(g(0, 1) - g(1, 0)) > 1e-12 * g_hi) {
      throw ConfigError("chart metric not symmetric positive definite at p = " +
                        point_str(p));
    }
    const Mat2 A = rho(p) * g.inverse() * L(p).transpose();
    return 0.5 * (A + A.transpose());
  };

  double lam = std::numeric_limits<double>::infinity();
  double Lam = 0.0;
  const int n = std::max(2, grid);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      const Vec2 p(dom.range1.lo + dom.range1.length() * i / n,
                   dom.range2.lo + dom.range2.length() * j / n);
      const auto [a_lo, a_hi] = sym_eigenvalues(eval(p));
      lam = std::min(lam, a_lo);
      Lam = std::max(Lam, a_hi);
    }
  }
  CoefficientField cf;
  cf.A = eval;
  cf.rho = rho;
  cf.lambda_ell = lam;
  cf.Lambda_ell = Lam;
  return cf;
}

double fd_default_step(double coord_scale) {
  return std::cbrt(std::numeric_limits<double>::epsilon()) *
         std::max(1.0, std::abs(coord_scale));
}

Mat32 jacobian_fd(const Immersion& imm, const Vec2& p, double step) {
  if (!(step > 0.0)) throw ConfigError("jacobian_fd: step must be positive");
  Mat32 J;
  for (int c = 0; c < 2; ++c) {
    Vec2 pp = p, pm = p;
    pp[c] += step;
    pm[c] -= step;
    J.col(c) = (imm.map(pp, imm.eps) - imm.map(pm, imm.eps)) / (2.0 * step);
  }
  return J;
}

// Plateau at 1 on [0, radius/2], quintic step down to 0 at radius.
double bump_cutoff(double r, double radius) {
  const double t = (radius - r) / (0.5 * radius);
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double bump_cutoff_derivative(double r, double radius) {
  const double t = (radius - r) / (0.5 * radius);
  if (t <= 0.0 || t >= 1.0) return 0.0;
  return -60.0 * t * t * (1.0 - t) * (1.0 - t) / radius;
}

Immersion star_graph_immersion(std::function<double(double, double)> f,
                               std::function<double(double, double)> d1f,
                               std::function<double(double, double)> d2f,
                               OscProfile profile, double eps) {
  Immersion imm;
  imm.profile = std::move(profile);
  imm.eps = eps;
  imm.map = [f](const Vec2& p, double e) -> Vec3 {
    const double r = p[0], th = p[1];
    return {r * std::sin(th), r * std::cos(th), e * f(r, th / e)};
  };
  imm.jacobian = [d1f, d2f](const Vec2& p, double e) -> Mat32 {
    const double r = p[0], th = p[1], y = th / e;
    Mat32 J;
    J.col(0) << std::sin(th), std::cos(th), e * d1f(r, y);
    J.col(1) << r * std::cos(th), -r * std::sin(th), d2f(r, y);
    return J;
  };
  return imm;
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

namespace {

Vec3 sphere_point(double phi, double th) {
  return {std::sin(phi) * std::sin(th), std::sin(phi) * std::cos(th), std::cos(phi)};
}
Vec3 sphere_dphi(double phi, double th) {
  return {std::cos(phi) * std::sin(th), std::cos(phi) * std::cos(th), -std::sin(phi)};
}
Vec3 sphere_dtheta(double phi, double th) {
  return {std::sin(phi) * std::cos(th), -std::sin(phi) * std::sin(th), 0.0};
}

double bumps_height(const std::vector<BumpSpec>& bumps, const OscProfile& prof,
                    const Vec2& x, double eps, double shift) {
  double h = 0.0;
  for (const auto& b : bumps) {
    const double r = (x - b.center).norm();
    if (r < b.radius) h += eps * prof.f((r + shift) / eps) * bump_cutoff(r, b.radius);
  }
  return h;
}

Vec2 bumps_height_grad(const std::vector<BumpSpec>& bumps, const OscProfile& prof,
                       const Vec2& x, double eps, double shift) {
  Vec2 g = Vec2::Zero();
  for (const auto& b : bumps) {
    const Vec2 d = x - b.center;
    const double r = d.norm();
    if (r >= b.radius || r < 1e-14) continue;
    const double y = (r + shift) / eps;
    const double dr = prof.df(y) * bump_cutoff(r, b.radius) +
                      eps * prof.f(y) * bump_cutoff_derivative(r, b.radius);
    g += dr / r * d;
  }
  return g;
}

}  // namespace

Immersion Scenario::immersion(double eps, double shift) const {
  if (!(eps > 0.0)) throw ConfigError("immersion: eps must be positive");
  Immersion imm;
  imm.eps = eps;
  imm.profile = profile;
  const OscProfile prof = profile;

  switch (kind) {
    case ScenarioKind::star_graph:
      imm.map = [prof, shift](const Vec2& p, double e) -> Vec3 {
        const double r = p[0], th = p[1];
        return {r * std::sin(th), r * std::cos(th), e * prof.f((th + shift) / e)};
      };
      imm.jacobian = [prof, shift](const Vec2& p, double e) -> Mat32 {
        const double r = p[0], th = p[1];
        Mat32 J;
        J.col(0) << std::sin(th), std::cos(th), 0.0;
        J.col(1) << r * std::cos(th), -r * std::sin(th), prof.df((th + shift) / e);
        return J;
      };
      break;

    case ScenarioKind::sphere_longitude:
      imm.map = [prof, shift](const Vec2& p, double e) -> Vec3 {
        return (1.0 + e * prof.f((p[1] + shift) / e)) * sphere_point(p[0], p[1]);
      };
      imm.jacobian = [prof, shift](const Vec2& p, double e) -> Mat32 {
        const double phi = p[0], th = p[1], y = (th + shift) / e;
        const double s = 1.0 + e * prof.f(y);
        Mat32 J;
        J.col(0) = s * sphere_dphi(phi, th);
        J.col(1) = prof.df(y) * sphere_point(phi, th) + s * sphere_dtheta(phi, th);
        return J;
      };
      break;

    case ScenarioKind::sphere_latitude:
      imm.map = [prof, shift](const Vec2& p, double e) -> Vec3 {
        return (1.0 + e * prof.f((p[0] + shift) / e)) * sphere_point(p[0], p[1]);
      };
      imm.jacobian = [prof, shift](const Vec2& p, double e) -> Mat32 {
        const double phi = p[0], th = p[1], y = (phi + shift) / e;
        const double s = 1.0 + e * prof.f(y);
        Mat32 J;
        J.col(0) = prof.df(y) * sphere_point(phi, th) + s * sphere_dphi(phi, th);
        J.col(1) = s * sphere_dtheta(phi, th);
        return J;
      };
      break;

    case ScenarioKind::radial_graph:
      imm.map = [prof, shift](const Vec2& p, double e) -> Vec3 {
        const double r = p[0], th = p[1];
        return {r * std::sin(th), r * std::cos(th), e * prof.f((r + shift) / e)};
      };
      imm.jacobian = [prof, shift](const Vec2& p, double e) -> Mat32 {
        const double r = p[0], th = p[1];
        Mat32 J;
        J.col(0) << std::sin(th), std::cos(th), prof.df((r + shift) / e);
        J.col(1) << r * std::cos(th), -r * std::sin(th), 0.0;
        return J;
      };
      break;

    case ScenarioKind::local_bumps: {
      const auto bumps = params.bumps;
      imm.map = [bumps, prof, shift](const Vec2& p, double e) -> Vec3 {
        return {p[0], p[1], bumps_height(bumps, prof, p, e, shift)};
      };
      imm.jacobian = [bumps, prof, shift](const Vec2& p, double e) -> Mat32 {
        const Vec2 g = bumps_height_grad(bumps, prof, p, e, shift);
        Mat32 J;
        J.col(0) << 1.0, 0.0, g[0];
        J.col(1) << 0.0, 1.0, g[1];
        return J;
      };
      break;
    }

    case ScenarioKind::strip_laminate:
      throw ConfigError("strip_laminate has no immersion (flat coefficient scenario)");
  }
  return imm;
}

CoefficientField Scenario::fine_field(double eps, double shift) const {
  if (kind == ScenarioKind::strip_laminate) {
    const double a0 = params.strip_phases[0];
    const double a1 = params.strip_phases[1];
    CoefficientField cf;
    cf.A = [a0, a1, eps, shift](const Vec2& p) -> Mat2 {
      const double y = (p[0] + shift) / eps;
      const double frac = y - std::floor(y);
      return (frac < 0.5 ? a0 : a1) * Mat2::Identity();
    };
    cf.rho = [](const Vec2&) { return 1.0; };
    cf.lambda_ell = std::min(a0, a1);
    cf.Lambda_ell = std::max(a0, a1);
    return cf;
  }
  CertifyOpts opts;
  opts.C0 = bilip_C;
  return pullback_field(immersion(eps, shift), domain, opts);
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "star_graph",   "sphere_longitude", "sphere_latitude",
      "radial_graph", "local_bumps",      "strip_laminate"};
  return names;
}

Scenario builtin_scenario(const std::string& name, ScenarioParams params) {
  Scenario s;
  s.name = name;
  s.params = params;

  auto default_profile = [&params](double period) {
    return params.profile ? *params.profile : sin2_profile(period);
  };

  if (name == "star_graph" || name == "radial_graph") {
    s.kind = name == "star_graph" ? ScenarioKind::star_graph
                                  : ScenarioKind::radial_graph;
    if (!(params.R > 0.0)) throw ConfigError(name + ": R must be positive");
    const double cut = params.inner_cutoff >= 0.0 ? params.inner_cutoff
                                                  : 0.05 * params.R;
    if (!(cut > 0.0) || cut >= params.R) {
      throw ConfigError(name + ": inner cutoff must lie in (0, R)");
    }
    s.domain.coord_names = {"r", "theta"};
    s.domain.range1 = {cut, params.R};
    s.domain.range2 = {0.0, 2.0 * pi};
    s.domain.periodic2 = true;
    s.domain.inner_cutoff = cut;
    s.profile = default_profile(name == "star_graph" ? 2.0 * pi : pi);
    s.bilip_C = std::max(8.0, 4.0 / cut);
  } else if (name == "sphere_longitude" || name == "sphere_latitude") {
    s.kind = name == "sphere_longitude" ? ScenarioKind::sphere_longitude
                                        : ScenarioKind::sphere_latitude;
    const double cut = params.inner_cutoff >= 0.0 ? params.inner_cutoff
                                                  : 0.05 * pi;
    if (!(cut > 0.0) || cut >= 0.5 * pi) {
      throw ConfigError(name + ": pole cutoff must lie in (0, pi/2)");
    }
    s.domain.coord_names = {"phi", "theta"};
    s.domain.range1 = {cut, pi - cut};
    s.domain.range2 = {0.0, 2.0 * pi};
    s.domain.periodic2 = true;
    s.domain.inner_cutoff = cut;
    s.profile = default_profile(2.0 * pi);
    s.bilip_C = std::max(8.0, 4.0 / std::sin(cut));
  } else if (name == "local_bumps") {
    s.kind = ScenarioKind::local_bumps;
    if (s.params.bumps.empty()) {
      s.params.bumps = {{Vec2(0.5, 0.5), 0.3}};
    }
    s.domain.coord_names = {"x1", "x2"};
    s.domain.range1 = params.rect1;
    s.domain.range2 = params.rect2;
    s.domain.periodic2 = false;
    s.domain.inner_cutoff = 0.0;
    if (!(s.domain.range1.length() > 0.0) || !(s.domain.range2.length() > 0.0)) {
      throw ConfigError("local_bumps: degenerate rectangle");
    }
    // Disjoint supports; a shared support would break the concentric
    // lamination structure.
    for (std::size_t i = 0; i < s.params.bumps.size(); ++i) {
      for (std::size_t j = i + 1; j < s.params.bumps.size(); ++j) {
        const double d = (s.params.bumps[i].center - s.params.bumps[j].center).norm();
        if (d < s.params.bumps[i].radius + s.params.bumps[j].radius) {
          throw ConfigError("local_bumps: bump supports overlap (centers " +
                            std::to_string(i) + ", " + std::to_string(j) + ")");
        }
      }
    }
    s.profile = default_profile(pi);
    s.bilip_C = 8.0;
  } else if (name == "strip_laminate") {
    s.kind = ScenarioKind::strip_laminate;
    s.domain.coord_names = {"x1", "x2"};
    s.domain.range1 = {0.0, 1.0};
    s.domain.range2 = {0.0, params.strip_width};
    s.domain.periodic2 = true;
    s.domain.inner_cutoff = 0.0;
    s.profile = zero_profile(1.0);
    s.bilip_C = 8.0;
    if (!(params.strip_phases[0] > 0.0) || !(params.strip_phases[1] > 0.0)) {
      throw ConfigError("strip_laminate: phase values must be positive");
    }
  } else {
    std::string msg = "unknown scenario '" + name + "' (valid:";
    for (const auto& n : scenario_names()) msg += " " + n;
    throw ConfigError(msg + ")");
  }
  return s;
}

}  // namespace homsurf::geometry
