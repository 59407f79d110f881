#include "homsurf/convergence.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <memory>
#include <ostream>

namespace homsurf::convergence {

namespace {

using fem::DiscreteOperator;
using fem::EigenResult;
using fem::Mesh;
using fem::SpMat;

void validate_eps_list(const std::vector<double>& eps_list) {
  if (eps_list.empty()) throw ConfigError("sweep: eps_list is empty");
  for (std::size_t i = 0; i < eps_list.size(); ++i) {
    if (!(eps_list[i] > 0.0)) throw ConfigError("sweep: eps values must be positive");
    if (i > 0 && !(eps_list[i] < eps_list[i - 1])) {
      throw ConfigError("sweep: eps_list must be strictly decreasing");
    }
  }
}

// Smooth bump vanishing at both ends of [lo, hi].
double smooth_bump(double t, double lo, double hi) {
  const double s = (t - lo) / (hi - lo);
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double v = std::sin(pi * s);
  return v * v;
}

struct Reference {
  std::shared_ptr<const Mesh> mesh;
  geometry::CoefficientField field;
  DiscreteOperator op;          // m = 0 operator for eigenproblems
  SpMat M_weighted;             // full, unconstrained, rho0-weighted
};

Reference make_reference(const SweepConfig& cfg) {
  Reference ref;
  const MeshSize size =
      mesh_for_eps(cfg.scenario, cfg.eps_list.back(), cfg.mesh_rule);
  ref.mesh = std::make_shared<Mesh>(
      fem::build_mesh(cfg.scenario.domain, size.n1, size.n2));
  ref.field = reference_field(cfg);
  ref.op = fem::assemble(ref.mesh, ref.field, 0.0);
  SpMat K_full;
  fem::assemble_matrices(*ref.mesh, ref.field, K_full, ref.M_weighted);
  return ref;
}

// Run fn(i) for i in [0, n) with at most `jobs` concurrent tasks; results are
// merged by index, so the output is independent of the schedule.
template <typename Fn>
void for_each_indexed(int n, int jobs, Fn&& fn) {
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  for (int base = 0; base < n; base += jobs) {
    std::vector<std::future<void>> batch;
    const int end = std::min(n, base + jobs);
    for (int i = base; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [i, &fn] { fn(i); }));
    }
    for (auto& f : batch) f.get();
  }
}

double weighted_l2_error(const Mesh& mesh, const Eigen::VectorXd& a,
                         const Eigen::VectorXd& b,
                         const std::function<double(const Vec2&)>& weight) {
  double acc = 0.0;
  for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e) {
    const auto& t = mesh.elements[e];
    const fem::ElementInfo info = fem::element_info(mesh, e);
    const double d[3] = {a[t[0]] - b[t[0]], a[t[1]] - b[t[1]], a[t[2]] - b[t[2]]};
    // edge-midpoint rule; midpoint q is opposite vertex q
    for (int q = 0; q < 3; ++q) {
      const double mid_val = 0.5 * (d[(q + 1) % 3] + d[(q + 2) % 3]);
      const Vec2 mid_pt = 0.5 * (mesh.nodes[t[(q + 1) % 3]] + mesh.nodes[t[(q + 2) % 3]]);
      acc += info.area / 3.0 * weight(mid_pt) * mid_val * mid_val;
    }
  }
  return std::sqrt(acc);
}

// int (A grad u) . eta cutoff over the mesh, element-midpoint rule.
double flux_pairing(const Mesh& mesh, const geometry::CoefficientField& cf,
                    const Eigen::VectorXd& u,
                    const std::function<Vec2(const Vec2&)>& eta,
                    const std::function<double(const Vec2&)>& cutoff) {
  double acc = 0.0;
  for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e) {
    const auto& t = mesh.elements[e];
    const fem::ElementInfo info = fem::element_info(mesh, e);
    Vec2 grad = Vec2::Zero();
    for (int v = 0; v < 3; ++v) grad += u[t[v]] * info.grad[v];
    const double w = cutoff(info.centroid);
    if (w == 0.0) continue;
    acc += info.area * w * (cf.A(info.centroid) * grad).dot(eta(info.centroid));
  }
  return acc;
}

// int (A grad u) . grad v cutoff over the mesh.
double divcurl_pairing(const Mesh& mesh, const geometry::CoefficientField& cf,
                       const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                       const std::function<double(const Vec2&)>& cutoff) {
  double acc = 0.0;
  for (int e = 0; e < static_cast<int>(mesh.elements.size()); ++e) {
    const auto& t = mesh.elements[e];
    const fem::ElementInfo info = fem::element_info(mesh, e);
    Vec2 gu = Vec2::Zero(), gv = Vec2::Zero();
    for (int w = 0; w < 3; ++w) {
      gu += u[t[w]] * info.grad[w];
      gv += v[t[w]] * info.grad[w];
    }
    const double w = cutoff(info.centroid);
    if (w == 0.0) continue;
    acc += info.area * w * (cf.A(info.centroid) * gu).dot(gv);
  }
  return acc;
}

Eigen::MatrixXd transport_columns(const Mesh& from, const Eigen::MatrixXd& cols,
                                  const Mesh& to) {
  Eigen::MatrixXd out(to.n_nodes(), cols.cols());
  for (int c = 0; c < cols.cols(); ++c) {
    out.col(c) = fem::interpolate_nodal(from, cols.col(c), to);
  }
  return out;
}

}  // namespace

const TableRow* ConvergenceTable::find(double eps, int k) const {
  for (const auto& r : rows) {
    if (r.eps == eps && r.k == k) return &r;
  }
  return nullptr;
}

TableRow& ConvergenceTable::upsert(double eps, int k) {
  for (auto& r : rows) {
    if (r.eps == eps && r.k == k) return r;
  }
  rows.push_back(TableRow{eps, k, 0, 0, 0, 0, 0, 0});
  return rows.back();
}

void write_csv(std::ostream& os, const ConvergenceTable& table) {
  os << "scenario,eps,k,lambda_eps,lambda_hom,rel_err,l2_err,flux_dev,angle\n";
  char buf[256];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.12g,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  table.scenario.c_str(), r.eps, r.k, r.lambda_eps, r.lambda_hom,
                  r.rel_err, r.l2_err, r.flux_dev, r.angle);
    os << buf;
  }
}

MeshSize mesh_for_eps(const geometry::Scenario& s, double eps,
                      const MeshRule& rule) {
  if (!(eps > 0.0)) throw ConfigError("mesh_for_eps: eps must be positive");
  // Longest edge is the cell diagonal, so each direction gets eps/(f*sqrt2).
  const double target = eps / (rule.cells_per_eps * std::sqrt(2.0));
  MeshSize size;
  size.n1 = std::max(2, static_cast<int>(std::ceil(s.domain.range1.length() / target)));
  size.n2 = std::max(2, static_cast<int>(std::ceil(s.domain.range2.length() / target)));
  // An odd angular count would break the alternating-diagonal pattern at the
  // seam and split the rotational-symmetry eigenvalue pairs.
  if (s.domain.periodic2 && size.n2 % 2 != 0) ++size.n2;
  const long nodes = static_cast<long>(size.n1 + 1) * (size.n2 + 1);
  if (nodes > rule.max_nodes) {
    throw NumericError(
        "sweep refused: resolving eps = " + std::to_string(eps) + " needs " +
        std::to_string(nodes) + " nodes > max " + std::to_string(rule.max_nodes));
  }
  return size;
}

geometry::CoefficientField reference_field(const SweepConfig& cfg) {
  geometry::CoefficientField field =
      cfg.ref_route == ReferenceRoute::closed_form
          ? homogenize::limit_coefficient(cfg.scenario)
          : homogenize::limit_coefficient_cell(cfg.scenario);
  if (cfg.identity_reference) {
    field.A = [](const Vec2&) { return Mat2::Identity().eval(); };
    field.lambda_ell = 1.0;
    field.Lambda_ell = 1.0;
  }
  return field;
}

Loads loads_by_name(const std::string& name) {
  Loads l;
  l.name = name;
  if (name == "none" || name.empty()) return l;
  if (name == "one") {
    l.f = [](const Vec2&) { return 1.0; };
    return l;
  }
  if (name == "bump") {
    l.f = [](const Vec2& p) { return std::exp(-8.0 * p.squaredNorm()); };
    return l;
  }
  throw ConfigError("unknown load '" + name + "' (valid: none, one, bump)");
}

std::vector<FluxField> default_flux_fields(const geometry::Scenario& s) {
  const double lo = s.domain.range1.lo;
  const double hi = s.domain.range1.hi;
  std::vector<FluxField> fields;
  FluxField radial;
  radial.name = "radial";
  radial.eta = [](const Vec2&) { return Vec2(1.0, 0.0); };
  radial.cutoff = [lo, hi](const Vec2& p) { return smooth_bump(p[0], lo, hi); };
  fields.push_back(std::move(radial));
  return fields;
}

AlignmentReport eigenspace_alignment(const Eigen::MatrixXd& fine_on_ref,
                                     const Eigen::VectorXd& fine_values,
                                     const fem::EigenResult& ref,
                                     const fem::SpMat& M_weighted,
                                     double gap_rel_tol) {
  AlignmentReport rep;
  const int kk = static_cast<int>(ref.values.size());
  int begin = 0;
  for (int i = 1; i <= kk; ++i) {
    if (i == kk || ref.values[i] - ref.values[i - 1] >
                       gap_rel_tol * std::max(1.0, std::abs(ref.values[i]))) {
      rep.groups.emplace_back(begin, i);
      begin = i;
    }
  }

  auto orthonormalize = [&M_weighted](Eigen::MatrixXd Z) {
    const Eigen::MatrixXd G = Z.transpose() * (M_weighted * Z).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (G + G.transpose()));
    return Eigen::MatrixXd(Z * es.eigenvectors() *
                           es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal());
  };

  for (const auto& [b, e] : rep.groups) {
    const int s = e - b;
    const Eigen::MatrixXd U = orthonormalize(fine_on_ref.middleCols(b, s));
    const Eigen::MatrixXd V = orthonormalize(ref.vectors.middleCols(b, s));
    const Eigen::MatrixXd C = U.transpose() * (M_weighted * V).eval();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
    const double sigma_min =
        std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
    rep.angles.push_back(std::acos(sigma_min));

    // Fine cluster split across the reference gap: the fine eigenvalue just
    // outside the group is closer to the group than the reference gap allows.
    bool mismatch = false;
    if (e < static_cast<int>(fine_values.size())) {
      const double gap = fine_values[e] - fine_values[e - 1];
      mismatch = gap <= gap_rel_tol * std::max(1.0, std::abs(fine_values[e]));
    }
    rep.dim_mismatch.push_back(mismatch);
  }
  return rep;
}

ConvergenceTable spectral_sweep(const SweepConfig& cfg) {
  validate_eps_list(cfg.eps_list);
  if (cfg.k_eigs < 1) throw ConfigError("spectral_sweep: k_eigs must be >= 1");

  const Reference ref = make_reference(cfg);

  // A few buffer pairs so the last multiplicity group is complete.
  const int kk = std::min(ref.op.n(), cfg.k_eigs + 3);
  fem::EigOpts eopts;
  eopts.seed = cfg.seed;
  const EigenResult ref_eigs = fem::eig_smallest(ref.op, kk, eopts);

  ConvergenceTable table;
  table.scenario = cfg.scenario.name;

  const int ne = static_cast<int>(cfg.eps_list.size());
  std::vector<std::vector<TableRow>> rows_by_eps(ne);

  for_each_indexed(ne, cfg.jobs, [&](int i) {
    const double eps = cfg.eps_list[i];
    const MeshSize size = mesh_for_eps(cfg.scenario, eps, cfg.mesh_rule);
    auto mesh = std::make_shared<Mesh>(
        fem::build_mesh(cfg.scenario.domain, size.n1, size.n2));
    const geometry::CoefficientField fine = cfg.scenario.fine_field(eps, cfg.shift);
    const DiscreteOperator op = fem::assemble(mesh, fine, 0.0);
    const EigenResult eigs = fem::eig_smallest(op, kk, eopts);

    const Eigen::MatrixXd fine_on_ref =
        transport_columns(*mesh, eigs.vectors, *ref.mesh);
    const AlignmentReport align = eigenspace_alignment(
        fine_on_ref, eigs.values, ref_eigs, ref.M_weighted);

    std::vector<TableRow> rows;
    for (int k = 0; k < cfg.k_eigs; ++k) {
      TableRow r;
      r.eps = eps;
      r.k = k + 1;
      r.lambda_eps = eigs.values[k];
      r.lambda_hom = ref_eigs.values[k];
      r.rel_err = std::abs(r.lambda_eps - r.lambda_hom) / r.lambda_hom;
      for (std::size_t g = 0; g < align.groups.size(); ++g) {
        if (k >= align.groups[g].first && k < align.groups[g].second) {
          r.angle = align.angles[g];
        }
      }
      rows.push_back(r);
    }
    rows_by_eps[i] = std::move(rows);
  });

  for (auto& rows : rows_by_eps) {
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }
  return table;
}

ConvergenceTable source_sweep(const SweepConfig& cfg) {
  validate_eps_list(cfg.eps_list);
  if (!cfg.loads.present()) throw ConfigError("source_sweep: loads required");

  const Reference ref = make_reference(cfg);
  const DiscreteOperator ref_op = fem::assemble(ref.mesh, ref.field, cfg.m);
  const Eigen::VectorXd u0 =
      fem::solve_source(ref_op, cfg.loads.f, cfg.loads.F, ref.field.rho);

  ConvergenceTable table;
  table.scenario = cfg.scenario.name;
  const int ne = static_cast<int>(cfg.eps_list.size());
  std::vector<TableRow> rows(ne);

  for_each_indexed(ne, cfg.jobs, [&](int i) {
    const double eps = cfg.eps_list[i];
    const MeshSize size = mesh_for_eps(cfg.scenario, eps, cfg.mesh_rule);
    auto mesh = std::make_shared<Mesh>(
        fem::build_mesh(cfg.scenario.domain, size.n1, size.n2));
    const geometry::CoefficientField fine = cfg.scenario.fine_field(eps, cfg.shift);
    const DiscreteOperator op = fem::assemble(mesh, fine, cfg.m);
    const Eigen::VectorXd u =
        fem::solve_source(op, cfg.loads.f, cfg.loads.F, fine.rho);
    const Eigen::VectorXd u_on_ref = fem::interpolate_nodal(*mesh, u, *ref.mesh);

    TableRow r;
    r.eps = eps;
    r.k = 0;
    r.l2_err = weighted_l2_error(*ref.mesh, u_on_ref, u0, fine.rho);
    rows[i] = r;
  });

  table.rows = std::move(rows);
  return table;
}

std::vector<FluxResult> flux_weak_test(const SweepConfig& cfg,
                                       const std::vector<FluxField>& fields) {
  validate_eps_list(cfg.eps_list);
  if (!cfg.loads.present()) throw ConfigError("flux_weak_test: loads required");

  const Reference ref = make_reference(cfg);
  const DiscreteOperator ref_op = fem::assemble(ref.mesh, ref.field, cfg.m);
  const Eigen::VectorXd u0 =
      fem::solve_source(ref_op, cfg.loads.f, cfg.loads.F, ref.field.rho);
  fem::EigOpts eopts;
  eopts.seed = cfg.seed;
  const EigenResult ref_eigs = fem::eig_smallest(ref.op, 1, eopts);

  const double lo = cfg.scenario.domain.range1.lo;
  const double hi = cfg.scenario.domain.range1.hi;
  auto dc_cutoff = [lo, hi](const Vec2& p) { return smooth_bump(p[0], lo, hi); };

  std::vector<double> ref_pairings;
  for (const auto& f : fields) {
    ref_pairings.push_back(flux_pairing(*ref.mesh, ref.field, u0, f.eta, f.cutoff));
  }
  const double ref_dc =
      divcurl_pairing(*ref.mesh, ref.field, u0, ref_eigs.vectors.col(0), dc_cutoff);

  const int ne = static_cast<int>(cfg.eps_list.size());
  std::vector<FluxResult> out(ne);

  for_each_indexed(ne, cfg.jobs, [&](int i) {
    const double eps = cfg.eps_list[i];
    const MeshSize size = mesh_for_eps(cfg.scenario, eps, cfg.mesh_rule);
    auto mesh = std::make_shared<Mesh>(
        fem::build_mesh(cfg.scenario.domain, size.n1, size.n2));
    const geometry::CoefficientField fine = cfg.scenario.fine_field(eps, cfg.shift);
    const DiscreteOperator op = fem::assemble(mesh, fine, cfg.m);
    const Eigen::VectorXd u =
        fem::solve_source(op, cfg.loads.f, cfg.loads.F, fine.rho);

    FluxResult res;
    res.eps = eps;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      const double p =
          flux_pairing(*mesh, fine, u, fields[f].eta, fields[f].cutoff);
      res.deviations.push_back(std::abs(p - ref_pairings[f]));
    }
    res.max_deviation = res.deviations.empty()
                            ? 0.0
                            : *std::max_element(res.deviations.begin(),
                                                res.deviations.end());

    // Div-Curl pairing with the fine ground state, sign-aligned to the
    // reference eigenfunction in the weighted inner product.
    const DiscreteOperator op_eig = fem::assemble(mesh, fine, 0.0);
    const EigenResult eigs = fem::eig_smallest(op_eig, 1, eopts);
    Eigen::VectorXd v = eigs.vectors.col(0);
    const Eigen::VectorXd v_ref =
        fem::interpolate_nodal(*mesh, v, *ref.mesh);
    if (v_ref.dot(ref.M_weighted * ref_eigs.vectors.col(0)) < 0.0) v = -v;
    const double p_dc = divcurl_pairing(*mesh, fine, u, v, dc_cutoff);
    res.divcurl_deviation = std::abs(p_dc - ref_dc);
    out[i] = res;
  });

  return out;
}

}  // namespace homsurf::convergence
