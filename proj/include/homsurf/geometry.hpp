#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "homsurf/types.hpp"

namespace homsurf::geometry {

// 1D periodic oscillation profile f with period T and derivative f'.
struct OscProfile {
  std::string name = "zero";
  double period = 2.0 * pi;
  std::function<double(double)> f = [](double) { return 0.0; };
  std::function<double(double)> df = [](double) { return 0.0; };
};

OscProfile sin2_profile(double period);
OscProfile sin_profile(double period);
OscProfile zero_profile(double period);
OscProfile profile_by_name(const std::string& name, double period);

struct ParamDomain {
  std::array<std::string, 2> coord_names{{"r", "theta"}};
  Interval range1;         // radial / latitude coordinate (truncated)
  Interval range2;         // angular coordinate
  bool periodic2 = false;  // angular wraparound
  double inner_cutoff = 0.0;
};

// Parametrized family of surfaces; `map` and `jacobian` take the oscillation
// scale as an explicit argument, `eps` selects the family member.
struct Immersion {
  std::function<Vec3(const Vec2&, double)> map;
  std::function<Mat32(const Vec2&, double)> jacobian;
  double eps = 0.0;
  OscProfile profile;

  Vec3 at(const Vec2& p) const { return map(p, eps); }
  Mat32 jac(const Vec2& p) const { return jacobian(p, eps); }
};

// Measurable 2x2 SPD coefficient field plus scalar density on the parameter
// domain, with sampled ellipticity bounds.
struct CoefficientField {
  std::function<Mat2(const Vec2&)> A;
  std::function<double(const Vec2&)> rho;
  double lambda_ell = 0.0;  // A xi.xi >= lambda_ell |xi|^2
  double Lambda_ell = 0.0;  // A^{-1} xi.xi >= |xi|^2 / Lambda_ell
};

// First fundamental form G = J^T J at p. Throws NumericError naming p when
// the Jacobian is rank deficient there.
Mat2 pullback(const Immersion& imm, const Vec2& p);

struct CertifyOpts {
  int grid = 256;    // sampling resolution of the certification grid
  double C0 = 0.0;   // >0: require Jacobian singular values in [1/C0, C0]
};

// rho_eps = sqrt(det G), A_eps = rho_eps G^{-1}. Ellipticity bounds are
// certified by dense sampling over the truncated domain.
CoefficientField pullback_field(const Immersion& imm, const ParamDomain& dom,
                                const CertifyOpts& opts = {});

// Chart transport of an abstract coefficient tensor: A = rho * g^{-1} L^T
// pointwise, where L is the endomorphism matrix of the tensor in the
// coordinate frame (assumed g-self-adjoint) and g_ij the chart metric.
CoefficientField chart_coefficient(const std::function<Mat2(const Vec2&)>& L,
                                   const std::function<double(const Vec2&)>& rho,
                                   const std::function<Mat2(const Vec2&)>& g_ij,
                                   const ParamDomain& dom, int grid = 256);

// Central finite-difference Jacobian; used to validate analytic Jacobians.
Mat32 jacobian_fd(const Immersion& imm, const Vec2& p, double step);
double fd_default_step(double coord_scale = 1.0);

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

enum class ScenarioKind {
  star_graph,        // polar graph, corrugation oscillating with the angle
  sphere_longitude,  // sphere, radial perturbation oscillating with longitude
  sphere_latitude,   // sphere, radial perturbation oscillating with latitude
  radial_graph,      // polar graph, corrugation oscillating with the radius
  local_bumps,       // Cartesian graph, concentric corrugations in bumps
  strip_laminate,    // flat strip with a two-phase 1D laminate coefficient
};

struct BumpSpec {
  Vec2 center{0.0, 0.0};
  double radius = 0.25;  // support radius of the cutoff psi_z
};

struct ScenarioParams {
  std::optional<OscProfile> profile;  // default sin^2 with per-scenario period
  double R = 1.0;                     // outer radius of star/radial graphs
  double inner_cutoff = -1.0;         // <0: default 0.05 * coordinate span
  std::vector<BumpSpec> bumps;        // local_bumps only
  Interval rect1{0.0, 1.0};           // local_bumps rectangle
  Interval rect2{0.0, 1.0};
  std::array<double, 2> strip_phases{1.0, 4.0};  // strip_laminate values
  double strip_width = 0.125;                    // strip cross-section
};

struct Scenario {
  std::string name;
  ScenarioKind kind;
  ParamDomain domain;
  OscProfile profile;
  ScenarioParams params;
  double bilip_C = 0.0;  // declared bi-Lipschitz band for certification

  // Family member at oscillation scale eps; `shift` translates the
  // oscillation along its lamination coordinate. Not available for
  // strip_laminate (which has no immersion).
  Immersion immersion(double eps, double shift = 0.0) const;

  // Fine-scale coefficient field (pullback for surfaces, direct laminate for
  // the strip).
  CoefficientField fine_field(double eps, double shift = 0.0) const;

  bool has_immersion() const { return kind != ScenarioKind::strip_laminate; }
};

Scenario builtin_scenario(const std::string& name, ScenarioParams params = {});
const std::vector<std::string>& scenario_names();

// Star graph with a general two-argument corrugation f(r, y); the built-in
// scenario wraps an r-independent profile.
Immersion star_graph_immersion(std::function<double(double, double)> f,
                               std::function<double(double, double)> d1f,
                               std::function<double(double, double)> d2f,
                               OscProfile profile, double eps);

// Smooth cutoff used for local_bumps: psi(0) = 1, psi >= radius vanishes,
// psi'(0) = 0 (a C^2 quintic step in between).
double bump_cutoff(double r, double radius);
double bump_cutoff_derivative(double r, double radius);

}  // namespace homsurf::geometry
