#include "homsurf/fem.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

namespace homsurf::fem {

namespace {

using Triplet = Eigen::Triplet<double>;

struct ElementGeometry {
  double area;
  Vec2 grad[3];     // P1 basis gradients
  Vec2 centroid;
  Vec2 midpoint[3]; // edge midpoints; midpoint[k] is opposite vertex k
};

ElementGeometry element_geometry(const Mesh& mesh, const std::array<int, 3>& tri,
                                 const Vec2* unwrapped = nullptr) {
  const Vec2 p0 = unwrapped ? unwrapped[0] : mesh.nodes[tri[0]];
  const Vec2 p1 = unwrapped ? unwrapped[1] : mesh.nodes[tri[1]];
  const Vec2 p2 = unwrapped ? unwrapped[2] : mesh.nodes[tri[2]];
  ElementGeometry g;
  const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) -
                     (p2[0] - p0[0]) * (p1[1] - p0[1]);
  g.area = 0.5 * det;
  const double inv = 1.0 / det;
  g.grad[0] = Vec2(p1[1] - p2[1], p2[0] - p1[0]) * inv;
  g.grad[1] = Vec2(p2[1] - p0[1], p0[0] - p2[0]) * inv;
  g.grad[2] = Vec2(p0[1] - p1[1], p1[0] - p0[0]) * inv;
  g.centroid = (p0 + p1 + p2) / 3.0;
  g.midpoint[0] = 0.5 * (p1 + p2);
  g.midpoint[1] = 0.5 * (p0 + p2);
  g.midpoint[2] = 0.5 * (p0 + p1);
  return g;
}

// Element node coordinates with the periodic seam unwrapped, so that element
// geometry is computed on the geometric cell rather than across the period.
void element_coords(const Mesh& mesh, int e, Vec2 out[3]) {
  const auto& tri = mesh.elements[e];
  for (int v = 0; v < 3; ++v) out[v] = mesh.nodes[tri[v]];
  if (!mesh.periodic2) return;
  const int cell_j = (e / 2) % mesh.n2;
  if (cell_j != mesh.n2 - 1) return;
  // The last cell column references seam nodes stored at range2.lo.
  const double half = 0.5 * mesh.d2();
  for (int v = 0; v < 3; ++v) {
    if (out[v][1] < mesh.range2.lo + half) out[v][1] += mesh.range2.length();
  }
}

}  // namespace

int Mesh::node_id(int i, int j) const {
  const int ncols = periodic2 ? n2 : n2 + 1;
  const int jj = periodic2 ? ((j % n2) + n2) % n2 : j;
  return i * ncols + jj;
}

Eigen::VectorXd DiscreteOperator::expand(const Eigen::VectorXd& reduced) const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n_full());
  for (std::size_t r = 0; r < free_nodes.size(); ++r) full[free_nodes[r]] = reduced[r];
  return full;
}

Eigen::VectorXd DiscreteOperator::restrict_to_free(const Eigen::VectorXd& full) const {
  Eigen::VectorXd red(free_nodes.size());
  for (std::size_t r = 0; r < free_nodes.size(); ++r) red[r] = full[free_nodes[r]];
  return red;
}

Mesh build_mesh(const geometry::ParamDomain& dom, int n1, int n2,
                const BoundaryConditions& bc) {
  if (n1 < 2 || n2 < 2) throw ConfigError("build_mesh: n1, n2 must be >= 2");
  if (!(dom.range1.length() > 0.0) || !(dom.range2.length() > 0.0)) {
    throw ConfigError("build_mesh: degenerate rectangle");
  }

  Mesh mesh;
  mesh.n1 = n1;
  mesh.n2 = n2;
  mesh.range1 = dom.range1;
  mesh.range2 = dom.range2;
  mesh.periodic2 = dom.periodic2;

  const double d1 = dom.range1.length() / n1;
  const double d2 = dom.range2.length() / n2;
  const int ncols = dom.periodic2 ? n2 : n2 + 1;

  mesh.nodes.reserve(static_cast<std::size_t>(n1 + 1) * ncols);
  for (int i = 0; i <= n1; ++i) {
    for (int j = 0; j < ncols; ++j) {
      mesh.nodes.emplace_back(dom.range1.lo + i * d1, dom.range2.lo + j * d2);
    }
  }

  mesh.elements.reserve(static_cast<std::size_t>(n1) * n2 * 2);
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      const int a = mesh.node_id(i, j);
      const int b = mesh.node_id(i + 1, j);
      const int c = mesh.node_id(i + 1, j + 1);
      const int d = mesh.node_id(i, j + 1);
      if ((i + j) % 2 == 0) {
        mesh.elements.push_back({a, b, c});
        mesh.elements.push_back({a, c, d});
      } else {
        mesh.elements.push_back({a, b, d});
        mesh.elements.push_back({b, c, d});
      }
    }
  }

  std::set<int> dirichlet;
  for (int j = 0; j < ncols; ++j) {
    if (bc.dirichlet_lo1) dirichlet.insert(mesh.node_id(0, j));
    if (bc.dirichlet_hi1) dirichlet.insert(mesh.node_id(n1, j));
  }
  if (!dom.periodic2) {
    for (int i = 0; i <= n1; ++i) {
      if (bc.dirichlet_lo2) dirichlet.insert(mesh.node_id(i, 0));
      if (bc.dirichlet_hi2) dirichlet.insert(mesh.node_id(i, n2));
    }
  } else {
    for (int i = 0; i <= n1; ++i) {
      mesh.periodic_seam_nodes.push_back(mesh.node_id(i, 0));
    }
  }
  mesh.dirichlet_nodes.assign(dirichlet.begin(), dirichlet.end());
  mesh.h_max = std::hypot(d1, d2);
  return mesh;
}

void assemble_matrices(const Mesh& mesh, const geometry::CoefficientField& cf,
                       SpMat& K_full, SpMat& M_full) {
  const int n = mesh.n_nodes();
  std::vector<Triplet> kt, mt;
  kt.reserve(mesh.elements.size() * 9);
  mt.reserve(mesh.elements.size() * 9);

  Vec2 coords[3];
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& tri = mesh.elements[e];
    element_coords(mesh, static_cast<int>(e), coords);
    const ElementGeometry g = element_geometry(mesh, tri, coords);
    const Mat2 A = cf.A(g.centroid);
    if (!A.allFinite()) {
      throw NumericError("assemble: non-finite coefficient sample in element " +
                         std::to_string(e));
    }
    double rho_q[3];
    for (int q = 0; q < 3; ++q) {
      rho_q[q] = cf.rho(g.midpoint[q]);
      if (!std::isfinite(rho_q[q])) {
        throw NumericError("assemble: non-finite density sample in element " +
                           std::to_string(e));
      }
    }
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        const double kab = g.area * g.grad[a].dot(A * g.grad[b]);
        // phi_a phi_b at the midpoint opposite q is 1/4 unless q == a or q == b.
        double mab = 0.0;
        for (int q = 0; q < 3; ++q) {
          if (q == a || q == b) continue;
          mab += g.area / 3.0 * rho_q[q] * 0.25;
        }
        kt.emplace_back(tri[a], tri[b], kab);
        if (mab != 0.0) mt.emplace_back(tri[a], tri[b], mab);
      }
    }
  }
  K_full.resize(n, n);
  M_full.resize(n, n);
  K_full.setFromTriplets(kt.begin(), kt.end());
  M_full.setFromTriplets(mt.begin(), mt.end());
}

namespace {

SpMat reduce(const SpMat& full, const std::vector<int>& full_to_free, int n_free) {
  std::vector<Triplet> t;
  t.reserve(full.nonZeros());
  for (int k = 0; k < full.outerSize(); ++k) {
    for (SpMat::InnerIterator it(full, k); it; ++it) {
      const int r = full_to_free[it.row()];
      const int c = full_to_free[it.col()];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  }
  SpMat out(n_free, n_free);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

}  // namespace

DiscreteOperator assemble(std::shared_ptr<const Mesh> mesh,
                          const geometry::CoefficientField& cf, double m) {
  SpMat K_full, M_full;
  assemble_matrices(*mesh, cf, K_full, M_full);

  DiscreteOperator op;
  op.mesh = std::move(mesh);
  op.m = m;
  op.full_to_free.assign(op.mesh->n_nodes(), -1);
  std::size_t d = 0;
  const auto& dir = op.mesh->dirichlet_nodes;
  for (int v = 0; v < op.mesh->n_nodes(); ++v) {
    if (d < dir.size() && dir[d] == v) {
      ++d;
      continue;
    }
    op.full_to_free[v] = static_cast<int>(op.free_nodes.size());
    op.free_nodes.push_back(v);
  }
  const int nf = static_cast<int>(op.free_nodes.size());
  op.K = reduce(K_full, op.full_to_free, nf);
  op.M = reduce(M_full, op.full_to_free, nf);
  return op;
}

Eigen::VectorXd solve_source(const DiscreteOperator& op,
                             const std::function<double(const Vec2&)>& f,
                             const std::function<Vec2(const Vec2&)>& F,
                             const std::function<double(const Vec2&)>& rho) {
  const Mesh& mesh = *op.mesh;
  if (op.mesh->dirichlet_nodes.empty() && !(op.m > 0.0)) {
    throw NumericError("solve_source: singular system (m = 0 with empty Dirichlet set)");
  }

  Eigen::VectorXd rhs_full = Eigen::VectorXd::Zero(mesh.n_nodes());
  Vec2 coords[3];
  for (std::size_t e = 0; e < mesh.elements.size(); ++e) {
    const auto& tri = mesh.elements[e];
    element_coords(mesh, static_cast<int>(e), coords);
    const ElementGeometry g = element_geometry(mesh, tri, coords);
    if (f) {
      for (int q = 0; q < 3; ++q) {
        const double w = g.area / 3.0 * rho(g.midpoint[q]) * f(g.midpoint[q]);
        for (int a = 0; a < 3; ++a) {
          if (a != q) rhs_full[tri[a]] += 0.5 * w;
        }
      }
    }
    if (F) {
      const Vec2 rF = rho(g.centroid) * F(g.centroid);
      for (int a = 0; a < 3; ++a) rhs_full[tri[a]] += g.area * rF.dot(g.grad[a]);
    }
  }

  const Eigen::VectorXd b = op.restrict_to_free(rhs_full);
  SpMat S = op.K;
  if (op.m != 0.0) S += op.m * op.M;

  Eigen::SimplicialLDLT<SpMat> ldlt(S);
  if (ldlt.info() != Eigen::Success) {
    throw NumericError("solve_source: factorization failure");
  }
  const Eigen::VectorXd u = ldlt.solve(b);
  const double bn = b.norm();
  if (bn > 0.0) {
    const double rel = (S * u - b).norm() / bn;
    if (!(rel <= 1e-10)) {
      throw NumericError("solve_source: relative residual " + std::to_string(rel) +
                         " exceeds 1e-10");
    }
  }
  return op.expand(u);
}

namespace {

// SplitMix64; the start block must not depend on library internals.
struct SplitMix64 {
  std::uint64_t state;
  explicit SplitMix64(std::uint64_t seed) : state(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9E3779B97f4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() {  // [-1, 1)
    return 2.0 * (static_cast<double>(next() >> 11) * 0x1.0p-53) - 1.0;
  }
};

}  // namespace

EigenResult eig_smallest(const DiscreteOperator& op, int k, const EigOpts& opts) {
  const int n = op.n();
  if (k < 1 || k > n) {
    throw ConfigError("eig_smallest: need 1 <= k <= constrained dimension");
  }

  // Shift: 0 when K is positive definite after elimination; otherwise a small
  // negative multiple of the M-normalized trace.
  double sigma = 0.0;
  if (op.mesh->dirichlet_nodes.empty()) {
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += op.K.coeff(i, i) / op.M.coeff(i, i);
    sigma = -1e-6 * tr;
  }

  SpMat S = op.K;
  if (sigma != 0.0) S -= sigma * op.M;
  Eigen::SimplicialLDLT<SpMat> ldlt(S);
  if (ldlt.info() != Eigen::Success) {
    throw NumericError("eig_smallest: factorization failure");
  }

  const double K_norm = [&] {
    Eigen::VectorXd rowsum = Eigen::VectorXd::Zero(n);
    for (int c = 0; c < op.K.outerSize(); ++c) {
      for (SpMat::InnerIterator it(op.K, c); it; ++it) {
        rowsum[it.row()] += std::abs(it.value());
      }
    }
    return rowsum.maxCoeff();
  }();

  const int m = std::min(n, std::max(2 * k + 2, k + 8));
  SplitMix64 rng(opts.seed);
  Eigen::MatrixXd X(n, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) X(i, j) = rng.uniform();
  }

  // M-orthonormalize the block by symmetric whitening of the Gram matrix.
  auto m_orthonormalize = [&](Eigen::MatrixXd& Z) {
    const Eigen::MatrixXd G = Z.transpose() * (op.M * Z).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()));
    const Eigen::VectorXd d = es.eigenvalues();
    if (!(d.minCoeff() > 1e-28 * std::max(1.0, d.maxCoeff()))) {
      throw NumericError("eig_smallest: iteration block became rank deficient");
    }
    Z = Z * es.eigenvectors() * d.cwiseSqrt().cwiseInverse().asDiagonal();
  };
  m_orthonormalize(X);

  Eigen::VectorXd theta;
  Eigen::VectorXd resid(k);
  int it = 0;
  for (;; ++it) {
    if (it >= opts.max_iter) {
      std::string msg = "eig_smallest: no convergence after " +
                        std::to_string(opts.max_iter) + " iterations; residuals";
      for (int i = 0; i < k; ++i) msg += " " + std::to_string(resid[i]);
      throw NumericError(msg);
    }
    Eigen::MatrixXd Y = ldlt.solve((op.M * X).eval());
    m_orthonormalize(Y);
    const Eigen::MatrixXd Kp = Y.transpose() * (op.K * Y).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Kp + Kp.transpose()));
    X = Y * es.eigenvectors();
    theta = es.eigenvalues();

    bool done = true;
    for (int i = 0; i < k; ++i) {
      const Eigen::VectorXd r = op.K * X.col(i) - theta[i] * (op.M * X.col(i));
      resid[i] = r.norm();
      if (!(resid[i] <= opts.tol * K_norm)) done = false;
    }
    if (done) break;
  }

  EigenResult out;
  out.values = theta.head(k);
  out.residuals = resid;
  out.vectors.resize(op.n_full(), k);
  for (int i = 0; i < k; ++i) {
    // Fix an arbitrary but deterministic sign: largest-magnitude entry positive.
    Eigen::VectorXd v = X.col(i);
    int imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    out.vectors.col(i) = op.expand(v);
  }
  out.groups.clear();
  int begin = 0;
  for (int i = 1; i <= k; ++i) {
    if (i == k || std::abs(out.values[i] - out.values[i - 1]) >
                      opts.group_rel_tol * std::max(1.0, std::abs(out.values[i]))) {
      out.groups.emplace_back(begin, i);
      begin = i;
    }
  }
  return out;
}

double eval_p1(const Mesh& mesh, const Eigen::VectorXd& vals, const Vec2& p) {
  const double d1 = mesh.d1();
  const double d2 = mesh.d2();
  double s = (p[0] - mesh.range1.lo) / d1;
  double t = (p[1] - mesh.range2.lo) / d2;
  if (mesh.periodic2) {
    const double n2d = mesh.n2;
    t = t - std::floor(t / n2d) * n2d;
  }
  int i = std::clamp(static_cast<int>(std::floor(s)), 0, mesh.n1 - 1);
  int j = std::clamp(static_cast<int>(std::floor(t)), 0, mesh.n2 - 1);
  const double xi = std::clamp(s - i, 0.0, 1.0);
  const double eta = std::clamp(t - j, 0.0, 1.0);

  const double va = vals[mesh.node_id(i, j)];
  const double vb = vals[mesh.node_id(i + 1, j)];
  const double vc = vals[mesh.node_id(i + 1, j + 1)];
  const double vd = vals[mesh.node_id(i, j + 1)];

  if ((i + j) % 2 == 0) {
    // diagonal a-c
    if (eta <= xi) return va + (vb - va) * xi + (vc - vb) * eta;
    return va + (vc - vd) * xi + (vd - va) * eta;
  }
  // diagonal b-d
  if (xi + eta <= 1.0) return va + (vb - va) * xi + (vd - va) * eta;
  return vc + (vd - vc) * (1.0 - xi) + (vb - vc) * (1.0 - eta);
}

Eigen::VectorXd interpolate_nodal(const Mesh& from, const Eigen::VectorXd& vals,
                                  const Mesh& to) {
  Eigen::VectorXd out(to.n_nodes());
  for (int v = 0; v < to.n_nodes(); ++v) out[v] = eval_p1(from, vals, to.nodes[v]);
  return out;
}

ElementInfo element_info(const Mesh& mesh, int e) {
  Vec2 coords[3];
  element_coords(mesh, e, coords);
  const ElementGeometry g = element_geometry(mesh, mesh.elements[e], coords);
  ElementInfo info;
  info.area = g.area;
  info.centroid = g.centroid;
  for (int v = 0; v < 3; ++v) info.grad[v] = g.grad[v];
  return info;
}

void write_coordinate_format(std::ostream& os, const SpMat& m) {
  for (int c = 0; c < m.outerSize(); ++c) {
    for (SpMat::InnerIterator it(m, c); it; ++it) {
      os << it.row() << " " << it.col() << " " << it.value() << "\n";
    }
  }
}

}  // namespace homsurf::fem
