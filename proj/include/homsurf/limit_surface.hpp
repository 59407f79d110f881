#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "homsurf/geometry.hpp"
#include "homsurf/homogenize.hpp"
#include "homsurf/types.hpp"

namespace homsurf::limit_surface {

// Limiting metric g_hat = rho * L0^{-1} and limiting measure density.
struct LimitMetric {
  std::function<Mat2(const Vec2&)> g_hat;
  std::function<double(const Vec2&)> mu_hat_density;
};

// Builds g_hat pointwise from the homogenized field; SPD certified by
// sampling over the truncated domain.
LimitMetric limit_metric(const homogenize::Profile& rho0,
                         const geometry::CoefficientField& L0,
                         const geometry::ParamDomain& dom, int grid = 64);

enum class EmbedKind {
  revolution_by_profile,  // radius rho0(t), height from 1 - rho0'^2
  revolution_by_height,   // radius s(t), height from rho0^2/s^2 - c^2
  graph_bumps,            // Cartesian graph over the rectangle
};

struct LimitEmbedding {
  EmbedKind kind = EmbedKind::revolution_by_profile;
  geometry::Immersion h0;  // eps-free immersion of the limit surface
  std::function<double(double)> height_integrand;  // value under the sqrt
  std::function<double(double)> height;            // cumulative integral from 0
};

// Surface of revolution realizing the limit metric. s_radius/s_deriv/c_term
// define the revolution-by-height family (pass nullptrs for the profile
// family). Height by cumulative adaptive quadrature, cached at Chebyshev
// nodes with barycentric interpolation.
LimitEmbedding embed_revolution(const homogenize::Profile& rho0, EmbedKind kind,
                                const geometry::ParamDomain& dom,
                                std::function<double(double)> s_radius = nullptr,
                                std::function<double(double)> s_deriv = nullptr,
                                std::function<double(double)> c_term = nullptr);

// The scenario's limit surface (revolution families and the bump graph).
LimitEmbedding limit_embedding(const geometry::Scenario& scen);

// Max over the grid of the Frobenius norm of dh0^T dh0 - g_hat, with a
// finite-difference Jacobian.
double check_embedding(const LimitEmbedding& emb, const LimitMetric& lm,
                       const geometry::ParamDomain& dom, int grid1, int grid2);

// OBJ export: "v x y z" / "f i j k" lines, 1-based, right-handed orientation.
void export_obj(std::ostream& os, const geometry::Immersion& imm,
                const geometry::ParamDomain& dom, int n1, int n2);

// Barycentric interpolation on Chebyshev points of [a, b]. Node j is
// (a+b)/2 + (b-a)/2 * cos(pi j / n), descending from b to a.
class Chebyshev1D {
 public:
  Chebyshev1D() = default;
  Chebyshev1D(const std::function<double(double)>& f, double a, double b, int n);
  static Chebyshev1D from_values(std::vector<double> values, double a, double b);
  static double node(double a, double b, int j, int n);

  double operator()(double t) const;
  double a() const { return a_; }
  double b() const { return b_; }

 private:
  double a_ = 0.0, b_ = 1.0;
  std::vector<double> nodes_, values_, weights_;
  void init_nodes_weights(int n);
};

}  // namespace homsurf::limit_surface
