#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Sparse>

#include "homsurf/geometry.hpp"
#include "homsurf/types.hpp"

namespace homsurf::fem {

using SpMat = Eigen::SparseMatrix<double>;

struct BoundaryConditions {
  bool dirichlet_lo1 = true;
  bool dirichlet_hi1 = true;
  bool dirichlet_lo2 = true;  // ignored when the domain is periodic
  bool dirichlet_hi2 = true;
};

// Structured crossed-triangle mesh of the parameter rectangle. The diagonal
// alternates with cell parity; angular wraparound identifies the last node
// column with the first.
struct Mesh {
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> elements;  // CCW
  std::vector<int> dirichlet_nodes;          // ascending
  std::vector<int> periodic_seam_nodes;      // nodes carrying the identification
  double h_max = 0.0;

  int n1 = 0, n2 = 0;
  Interval range1, range2;
  bool periodic2 = false;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int node_id(int i, int j) const;  // grid index, j wraps when periodic
  double d1() const { return range1.length() / n1; }
  double d2() const { return range2.length() / n2; }
};

Mesh build_mesh(const geometry::ParamDomain& dom, int n1, int n2,
                const BoundaryConditions& bc = {});

// Stiffness and mass after Dirichlet elimination, plus the index maps back to
// the full nodal numbering. Immutable after construction.
struct DiscreteOperator {
  std::shared_ptr<const Mesh> mesh;
  SpMat K, M;                   // constrained
  std::vector<int> free_nodes;  // reduced index -> full node id
  std::vector<int> full_to_free;  // -1 at Dirichlet nodes
  double m = 0.0;

  int n() const { return static_cast<int>(K.rows()); }
  int n_full() const { return mesh->n_nodes(); }
  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const;
  Eigen::VectorXd restrict_to_free(const Eigen::VectorXd& full) const;
};

// P1 elements; A sampled at element centroids, rho by the 3-point
// edge-midpoint rule (exact for P1 products).
DiscreteOperator assemble(std::shared_ptr<const Mesh> mesh,
                          const geometry::CoefficientField& cf, double m);

// Unconstrained matrices (tests and inner products).
void assemble_matrices(const Mesh& mesh, const geometry::CoefficientField& cf,
                       SpMat& K_full, SpMat& M_full);

// Solves (K + m M) u = (rho f, v) + (rho F, grad v); returns the full nodal
// vector (zeros on the Dirichlet set). Relative residual is checked.
Eigen::VectorXd solve_source(const DiscreteOperator& op,
                             const std::function<double(const Vec2&)>& f,
                             const std::function<Vec2(const Vec2&)>& F,
                             const std::function<double(const Vec2&)>& rho);

struct EigOpts {
  double tol = 1e-9;       // residual <= tol * ||K||_inf
  int max_iter = 500;
  std::uint64_t seed = 0x5EED;
  double group_rel_tol = 1e-8;
};

struct EigenResult {
  Eigen::VectorXd values;    // ascending
  Eigen::MatrixXd vectors;   // n_full x k, M-orthonormal
  Eigen::VectorXd residuals; // ||K x - lambda M x||_2 in the reduced system
  std::vector<std::pair<int, int>> groups;  // [begin, end) multiplicity groups
};

// k smallest generalized eigenpairs of K x = lambda M x by shift-invert
// subspace iteration with a sparse factorization and a deterministic start
// block.
EigenResult eig_smallest(const DiscreteOperator& op, int k, const EigOpts& opts = {});

// P1 evaluation / transport between structured meshes over the same rectangle.
double eval_p1(const Mesh& mesh, const Eigen::VectorXd& full_values, const Vec2& p);
Eigen::VectorXd interpolate_nodal(const Mesh& from, const Eigen::VectorXd& vals,
                                  const Mesh& to);

// Per-element geometry for quadrature loops outside the assembler: area,
// centroid (periodically unwrapped) and the P1 basis gradients.
struct ElementInfo {
  double area;
  Vec2 centroid;
  Vec2 grad[3];
};
ElementInfo element_info(const Mesh& mesh, int e);

// Debug export: one "i j value" triplet per line, 0-based.
void write_coordinate_format(std::ostream& os, const SpMat& m);

}  // namespace homsurf::fem
