#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "homsurf/fem.hpp"
#include "homsurf/geometry.hpp"
#include "homsurf/homogenize.hpp"

namespace homsurf::convergence {

struct MeshRule {
  double cells_per_eps = 8.0;       // h_max <= eps / cells_per_eps
  long max_nodes = 1024L * 1024L;   // refuse sweeps past this size
};

struct Loads {
  std::function<double(const Vec2&)> f;  // either may be null
  std::function<Vec2(const Vec2&)> F;
  std::string name = "none";
  bool present() const { return static_cast<bool>(f) || static_cast<bool>(F); }
};

Loads loads_by_name(const std::string& name);

enum class ReferenceRoute { closed_form, cell_solve };

struct SweepConfig {
  geometry::Scenario scenario;
  std::vector<double> eps_list;  // strictly decreasing
  int k_eigs = 5;
  MeshRule mesh_rule;
  double m = 0.0;
  Loads loads;
  double shift = 0.0;
  std::uint64_t seed = 0x5EED;
  int jobs = 1;
  ReferenceRoute ref_route = ReferenceRoute::closed_form;
  bool identity_reference = false;  // negative control: replace L0 by I
};

struct TableRow {
  double eps = 0.0;
  int k = 0;  // 1-based eigenvalue index; 0 on source-only rows
  double lambda_eps = 0.0;
  double lambda_hom = 0.0;
  double rel_err = 0.0;
  double l2_err = 0.0;
  double flux_dev = 0.0;
  double angle = 0.0;
};

struct ConvergenceTable {
  std::string scenario;
  std::vector<TableRow> rows;

  const TableRow* find(double eps, int k) const;
  TableRow& upsert(double eps, int k);
};

// CSV with the fixed header
// "scenario,eps,k,lambda_eps,lambda_hom,rel_err,l2_err,flux_dev,angle".
void write_csv(std::ostream& os, const ConvergenceTable& table);

// Structured mesh sizes satisfying the resolution rule; throws when the rule
// cannot be met within max_nodes.
struct MeshSize {
  int n1 = 0, n2 = 0;
};
MeshSize mesh_for_eps(const geometry::Scenario& s, double eps, const MeshRule& rule);

// Homogenized reference coefficient of the sweep (closed form or cell route;
// identity negative control keeps the density).
geometry::CoefficientField reference_field(const SweepConfig& cfg);

// Eigenvalue sweep: fine spectra per eps against the homogenized reference,
// with eigenspace alignment per multiplicity group.
ConvergenceTable spectral_sweep(const SweepConfig& cfg);

// Source-problem sweep: weighted L2 errors of fine solutions against the
// homogenized solution, transported to the reference mesh.
ConvergenceTable source_sweep(const SweepConfig& cfg);

struct FluxField {
  std::function<Vec2(const Vec2&)> eta;      // smooth test vector field
  std::function<double(const Vec2&)> cutoff; // smooth scalar cutoff
  std::string name;
};

// Radial unit field with a smooth radial bump cutoff on the scenario domain.
std::vector<FluxField> default_flux_fields(const geometry::Scenario& s);

struct FluxResult {
  double eps = 0.0;
  std::vector<double> deviations;  // per test field
  double max_deviation = 0.0;
  double divcurl_deviation = 0.0;  // eigenfunction pairing
};

// Weak flux pairings of A_eps grad u_eps against test fields and the Div-Curl
// eigenfunction pairing, per eps.
std::vector<FluxResult> flux_weak_test(const SweepConfig& cfg,
                                       const std::vector<FluxField>& fields);

struct AlignmentReport {
  std::vector<std::pair<int, int>> groups;  // [begin, end) in eigen index
  std::vector<double> angles;               // largest principal angle per group
  std::vector<bool> dim_mismatch;           // fine cluster split across the gap
};

// Principal angles between fine and reference eigenspaces per multiplicity
// group of the reference (relative gap threshold), in the weighted L2 inner
// product given by M_weighted (full, unconstrained).
AlignmentReport eigenspace_alignment(const Eigen::MatrixXd& fine_on_ref,
                                     const Eigen::VectorXd& fine_values,
                                     const fem::EigenResult& ref,
                                     const fem::SpMat& M_weighted,
                                     double gap_rel_tol = 1e-6);

}  // namespace homsurf::convergence
