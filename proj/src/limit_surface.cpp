#include "homsurf/limit_surface.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "homsurf/quadrature.hpp"

namespace homsurf::limit_surface {

namespace {

// Height integrands vanish identically in degenerate (flat) limits; roundoff
// there must not abort the construction, larger negatives are hard errors.
double clamped_sqrt(double value, double t) {
  if (value < -1e-12) {
    throw NumericError("embeddability violated at t = " + std::to_string(t) +
                       ": height integrand = " + std::to_string(value));
  }
  return std::sqrt(std::max(0.0, value));
}

}  // namespace

double Chebyshev1D::node(double a, double b, int j, int n) {
  return 0.5 * (a + b) + 0.5 * (b - a) * std::cos(pi * j / n);
}

void Chebyshev1D::init_nodes_weights(int n) {
  nodes_.resize(n + 1);
  weights_.resize(n + 1);
  for (int j = 0; j <= n; ++j) {
    nodes_[j] = node(a_, b_, j, n);
    weights_[j] = (j % 2 == 0 ? 1.0 : -1.0) * (j == 0 || j == n ? 0.5 : 1.0);
  }
}

Chebyshev1D::Chebyshev1D(const std::function<double(double)>& f, double a,
                         double b, int n)
    : a_(a), b_(b) {
  init_nodes_weights(n);
  values_.resize(n + 1);
  for (int j = 0; j <= n; ++j) values_[j] = f(nodes_[j]);
}

Chebyshev1D Chebyshev1D::from_values(std::vector<double> values, double a,
                                     double b) {
  Chebyshev1D c;
  c.a_ = a;
  c.b_ = b;
  c.init_nodes_weights(static_cast<int>(values.size()) - 1);
  c.values_ = std::move(values);
  return c;
}

double Chebyshev1D::operator()(double t) const {
  double num = 0.0, den = 0.0;
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    const double d = t - nodes_[j];
    if (d == 0.0) return values_[j];
    const double c = weights_[j] / d;
    num += c * values_[j];
    den += c;
  }
  return num / den;
}

LimitMetric limit_metric(const homogenize::Profile&,
                         const geometry::CoefficientField& L0,
                         const geometry::ParamDomain& dom, int grid) {
  auto A = L0.A;
  auto rho = L0.rho;
  auto g_hat = [A, rho](const Vec2& p) -> Mat2 {
    return rho(p) * A(p).inverse();
  };
  for (int i = 0; i <= grid; ++i) {
    for (int j = 0; j <= grid; ++j) {
      const Vec2 p(dom.range1.lo + dom.range1.length() * i / grid,
                   dom.range2.lo + dom.range2.length() * j / grid);
      Eigen::SelfAdjointEigenSolver<Mat2> es(g_hat(p));
      if (!(es.eigenvalues()(0) > 0.0)) {
        throw NumericError("limit_metric: non-SPD product at (" +
                           std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                           ") - inconsistent rho0 / L0 inputs");
      }
    }
  }
  LimitMetric lm;
  lm.g_hat = g_hat;
  lm.mu_hat_density = rho;
  return lm;
}

namespace {

// Cumulative integral of f from 0, cached at Chebyshev nodes.
std::function<double(double)> cumulative_height(
    const std::function<double(double)>& f, double hi, int n = 256) {
  // Node n sits at the low end; integrate segments in ascending order.
  std::vector<double> vals(n + 1);
  const QuadSpec seg{1e-12, 24};
  vals[n] = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    const double lo_t = Chebyshev1D::node(0.0, hi, j + 1, n);
    const double hi_t = Chebyshev1D::node(0.0, hi, j, n);
    vals[j] = vals[j + 1] + integrate(f, lo_t, hi_t, seg);
  }
  auto interp = std::make_shared<Chebyshev1D>(
      Chebyshev1D::from_values(std::move(vals), 0.0, hi));
  return [interp](double t) { return (*interp)(t); };
}

}  // namespace

LimitEmbedding embed_revolution(const homogenize::Profile& rho0, EmbedKind kind,
                                const geometry::ParamDomain& dom,
                                std::function<double(double)> s_radius,
                                std::function<double(double)> s_deriv,
                                std::function<double(double)> c_term) {
  if (kind == EmbedKind::graph_bumps) {
    throw ConfigError("embed_revolution: graph family is built via limit_embedding");
  }
  LimitEmbedding emb;
  emb.kind = kind;

  const double hi = dom.range1.hi;
  const double t_floor = 1e-8 * std::max(1.0, hi);

  if (kind == EmbedKind::revolution_by_profile) {
    auto drho = rho0.drho0;
    emb.height_integrand = [drho, t_floor](double t) {
      const double d = drho(std::max(t, t_floor));
      return 1.0 - d * d;
    };
  } else {
    if (!s_radius || !c_term) {
      throw ConfigError("embed_revolution: revolution-by-height needs s and c");
    }
    auto r0 = rho0.rho0;
    emb.height_integrand = [r0, s_radius, c_term, t_floor](double t) {
      const double ts = std::max(t, t_floor);
      const double ratio = r0(ts) / s_radius(ts);
      const double c = c_term(ts);
      return ratio * ratio - c * c;
    };
  }

  auto integrand = emb.height_integrand;
  auto sqrt_integrand = [integrand](double t) {
    return clamped_sqrt(integrand(t), t);
  };
  emb.height = cumulative_height(sqrt_integrand, hi);

  auto height = emb.height;
  auto r0 = rho0.rho0;
  auto dr0 = rho0.drho0;
  emb.h0.eps = 0.0;
  emb.h0.profile = geometry::zero_profile(1.0);
  if (kind == EmbedKind::revolution_by_profile) {
    emb.h0.map = [r0, height](const Vec2& p, double) -> Vec3 {
      const double rr = r0(p[0]);
      return {rr * std::sin(p[1]), rr * std::cos(p[1]), height(p[0])};
    };
    emb.h0.jacobian = [r0, dr0, sqrt_integrand, height](const Vec2& p,
                                                        double) -> Mat32 {
      const double rr = r0(p[0]);
      const double dr = dr0(p[0]);
      Mat32 J;
      J.col(0) << dr * std::sin(p[1]), dr * std::cos(p[1]), sqrt_integrand(p[0]);
      J.col(1) << rr * std::cos(p[1]), -rr * std::sin(p[1]), 0.0;
      return J;
    };
  } else {
    emb.h0.map = [s_radius, height](const Vec2& p, double) -> Vec3 {
      const double rr = s_radius(p[0]);
      return {rr * std::sin(p[1]), rr * std::cos(p[1]), height(p[0])};
    };
    emb.h0.jacobian = [s_radius, s_deriv, sqrt_integrand, height](
                          const Vec2& p, double) -> Mat32 {
      const double rr = s_radius(p[0]);
      const double ds = s_deriv ? s_deriv(p[0]) : 1.0;
      Mat32 J;
      J.col(0) << ds * std::sin(p[1]), ds * std::cos(p[1]), sqrt_integrand(p[0]);
      J.col(1) << rr * std::cos(p[1]), -rr * std::sin(p[1]), 0.0;
      return J;
    };
  }
  return emb;
}

LimitEmbedding limit_embedding(const geometry::Scenario& scen) {
  using geometry::ScenarioKind;
  const homogenize::Profile prof = homogenize::limit_profile(scen);

  switch (scen.kind) {
    case ScenarioKind::star_graph:
    case ScenarioKind::sphere_longitude:
      return embed_revolution(prof, EmbedKind::revolution_by_profile, scen.domain);
    case ScenarioKind::radial_graph:
      return embed_revolution(
          prof, EmbedKind::revolution_by_height, scen.domain,
          [](double t) { return t; }, [](double) { return 1.0; },
          [](double) { return 1.0; });
    case ScenarioKind::sphere_latitude:
      return embed_revolution(
          prof, EmbedKind::revolution_by_height, scen.domain,
          [](double t) { return std::sin(t); },
          [](double t) { return std::cos(t); },
          [](double t) { return std::cos(t); });
    case ScenarioKind::local_bumps: {
      LimitEmbedding emb;
      emb.kind = EmbedKind::graph_bumps;
      const double t_floor = 1e-8;

      struct BumpHeight {
        Vec2 center;
        double radius;
        std::function<double(double)> integrand;  // under the sqrt
        std::function<double(double)> height;
      };
      auto bumps = std::make_shared<std::vector<BumpHeight>>();
      const geometry::Scenario sc = scen;
      for (const auto& b : scen.params.bumps) {
        BumpHeight bh;
        bh.center = b.center;
        bh.radius = b.radius;
        const double radius = b.radius;
        bh.integrand = [sc, radius, t_floor](double t) {
          const double ts = std::max(t, t_floor);
          const double ratio = homogenize::rho0_bump_profile(sc, radius, ts) / ts;
          return ratio * ratio - 1.0;
        };
        auto integ = bh.integrand;
        bh.height = cumulative_height(
            [integ](double t) { return clamped_sqrt(integ(t), t); }, radius);
        bumps->push_back(std::move(bh));
      }
      // The total height integrand along a ray (first bump; diagnostics only).
      emb.height_integrand = bumps->empty()
                                 ? std::function<double(double)>([](double) { return 0.0; })
                                 : bumps->front().integrand;
      auto total_height = [bumps](const Vec2& x) {
        double h = 0.0;
        for (const auto& b : *bumps) {
          h += b.height(std::min((x - b.center).norm(), b.radius));
        }
        return h;
      };
      emb.height = [bumps](double t) {
        double h = 0.0;
        for (const auto& b : *bumps) h += b.height(std::min(t, b.radius));
        return h;
      };
      emb.h0.eps = 0.0;
      emb.h0.profile = geometry::zero_profile(1.0);
      emb.h0.map = [total_height](const Vec2& p, double) -> Vec3 {
        return {p[0], p[1], total_height(p)};
      };
      emb.h0.jacobian = [bumps](const Vec2& p, double) -> Mat32 {
        Vec2 g = Vec2::Zero();
        for (const auto& b : *bumps) {
          const Vec2 d = p - b.center;
          const double r = d.norm();
          if (r >= b.radius || r < 1e-14) continue;
          g += clamped_sqrt(b.integrand(r), r) / r * d;
        }
        Mat32 J;
        J.col(0) << 1.0, 0.0, g[0];
        J.col(1) << 0.0, 1.0, g[1];
        return J;
      };
      return emb;
    }
    case ScenarioKind::strip_laminate:
      throw ConfigError("limit_embedding: strip_laminate has no limit surface");
  }
  throw ConfigError("limit_embedding: unhandled scenario");
}

double check_embedding(const LimitEmbedding& emb, const LimitMetric& lm,
                       const geometry::ParamDomain& dom, int grid1, int grid2) {
  double worst = 0.0;
  const double step = geometry::fd_default_step(
      std::max(dom.range1.length(), dom.range2.length()));
  for (int i = 0; i < grid1; ++i) {
    for (int j = 0; j < grid2; ++j) {
      const Vec2 p(dom.range1.lo + dom.range1.length() * (i + 0.5) / grid1,
                   dom.range2.lo + dom.range2.length() * (j + 0.5) / grid2);
      const Mat32 J = geometry::jacobian_fd(emb.h0, p, step);
      const Mat2 G = J.transpose() * J;
      worst = std::max(worst, (G - lm.g_hat(p)).norm());
    }
  }
  return worst;
}

void export_obj(std::ostream& os, const geometry::Immersion& imm,
                const geometry::ParamDomain& dom, int n1, int n2) {
  const double d1 = dom.range1.length() / n1;
  const double d2 = dom.range2.length() / n2;
  char buf[128];
  for (int i = 0; i <= n1; ++i) {
    for (int j = 0; j <= n2; ++j) {
      const Vec3 v = imm.at(Vec2(dom.range1.lo + i * d1, dom.range2.lo + j * d2));
      std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v[0], v[1], v[2]);
      os << buf;
    }
  }
  auto id = [n2](int i, int j) { return i * (n2 + 1) + j + 1; };  // 1-based
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
      if ((i + j) % 2 == 0) {
        os << "f " << a << " " << b << " " << c << "\n";
        os << "f " << a << " " << c << " " << d << "\n";
      } else {
        os << "f " << a << " " << b << " " << d << "\n";
        os << "f " << b << " " << c << " " << d << "\n";
      }
    }
  }
}

}  // namespace homsurf::limit_surface
