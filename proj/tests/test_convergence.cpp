#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "homsurf/convergence.hpp"
#include "oracles.hpp"

using namespace homsurf;
using namespace homsurf::convergence;

namespace {

SweepConfig small_star_sweep() {
  SweepConfig cfg;
  cfg.scenario = geometry::builtin_scenario("star_graph");
  cfg.eps_list = {0.5, 0.25};
  cfg.k_eigs = 3;
  cfg.mesh_rule.cells_per_eps = 4.0;
  return cfg;
}

}  // namespace

TEST_CASE("mesh_for_eps enforces the resolution rule") {
  const auto s = geometry::builtin_scenario("star_graph");
  MeshRule rule;
  rule.cells_per_eps = 8.0;
  const double eps = 0.25;
  const MeshSize size = mesh_for_eps(s, eps, rule);
  const fem::Mesh m = fem::build_mesh(s.domain, size.n1, size.n2);
  CHECK(m.h_max <= eps / rule.cells_per_eps * (1.0 + 1e-12));

  MeshRule tiny;
  tiny.max_nodes = 100;
  CHECK_THROWS_AS(mesh_for_eps(s, 0.01, tiny), NumericError);
}

TEST_CASE("spectral sweep without oscillation sits at the discretization floor") {
  geometry::ScenarioParams params;
  params.profile = geometry::zero_profile(2.0 * pi);
  SweepConfig cfg;
  cfg.scenario = geometry::builtin_scenario("star_graph", params);
  cfg.eps_list = {0.5, 0.25};
  cfg.k_eigs = 3;
  cfg.mesh_rule.cells_per_eps = 4.0;
  const ConvergenceTable table = spectral_sweep(cfg);
  REQUIRE(table.rows.size() == 6);
  for (const auto& r : table.rows) {
    CHECK(r.rel_err < 2e-2);
    CHECK(r.angle < 0.05);
    CHECK(r.lambda_hom > 0.0);
  }
  // reference column identical across eps rows
  for (int k = 1; k <= 3; ++k) {
    CHECK(table.find(0.5, k)->lambda_hom == table.find(0.25, k)->lambda_hom);
  }
}

TEST_CASE("spectral sweep is deterministic") {
  const SweepConfig cfg = small_star_sweep();
  const ConvergenceTable a = spectral_sweep(cfg);
  const ConvergenceTable b = spectral_sweep(cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].lambda_eps == b.rows[i].lambda_eps);
    CHECK(a.rows[i].angle == b.rows[i].angle);
  }
}

TEST_CASE("reference column is route independent") {
  SweepConfig cfg = small_star_sweep();
  cfg.eps_list = {0.5};
  const ConvergenceTable closed = spectral_sweep(cfg);
  cfg.ref_route = ReferenceRoute::cell_solve;
  const ConvergenceTable cell = spectral_sweep(cfg);
  for (int k = 1; k <= cfg.k_eigs; ++k) {
    const double a = closed.find(0.5, k)->lambda_hom;
    const double b = cell.find(0.5, k)->lambda_hom;
    CHECK(std::abs(a - b) <= 1e-6 * a);
  }
}

TEST_CASE("source sweep on the oscillating strip") {
  SweepConfig cfg;
  cfg.scenario = geometry::builtin_scenario("strip_laminate");
  cfg.eps_list = {1.0 / 16.0, 1.0 / 32.0};
  cfg.loads = loads_by_name("one");
  const ConvergenceTable table = source_sweep(cfg);
  const double e16 = table.find(1.0 / 16.0, 0)->l2_err;
  const double e32 = table.find(1.0 / 32.0, 0)->l2_err;
  CHECK(e32 < e16);
  const double ratio = e16 / e32;
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 2.5);
}

TEST_CASE("source sweep requires loads") {
  SweepConfig cfg = small_star_sweep();
  CHECK_THROWS_AS(source_sweep(cfg), ConfigError);
}

TEST_CASE("flux pairings") {
  SUBCASE("zero test field has zero deviation") {
    SweepConfig cfg;
    cfg.scenario = geometry::builtin_scenario("strip_laminate");
    cfg.eps_list = {0.125};
    cfg.loads = loads_by_name("one");
    std::vector<FluxField> fields(1);
    fields[0].name = "zero";
    fields[0].eta = [](const Vec2&) { return Vec2::Zero().eval(); };
    fields[0].cutoff = [](const Vec2&) { return 1.0; };
    const auto res = flux_weak_test(cfg, fields);
    REQUIRE(res.size() == 1);
    CHECK(res[0].deviations[0] == 0.0);
  }

  SUBCASE("constant coefficients sit at the discretization floor") {
    geometry::ScenarioParams params;
    params.strip_phases = {2.0, 2.0};  // no contrast: A_eps = A_hom
    SweepConfig cfg;
    cfg.scenario = geometry::builtin_scenario("strip_laminate", params);
    cfg.eps_list = {0.25, 0.125};
    cfg.loads = loads_by_name("one");
    const auto res = flux_weak_test(cfg, default_flux_fields(cfg.scenario));
    for (const auto& r : res) {
      CHECK(r.max_deviation < 1e-5);
      CHECK(r.divcurl_deviation < 1e-4);
    }
  }
}

TEST_CASE("eigenspace alignment") {
  SweepConfig cfg = small_star_sweep();
  const geometry::CoefficientField ref_field = reference_field(cfg);
  const MeshSize size = mesh_for_eps(cfg.scenario, 0.25, cfg.mesh_rule);
  auto mesh = std::make_shared<fem::Mesh>(
      fem::build_mesh(cfg.scenario.domain, size.n1, size.n2));
  const fem::DiscreteOperator op = fem::assemble(mesh, ref_field, 0.0);
  const fem::EigenResult eigs = fem::eig_smallest(op, 5);
  fem::SpMat K_full, M_full;
  fem::assemble_matrices(*mesh, ref_field, K_full, M_full);

  SUBCASE("identical operators give zero angles") {
    const AlignmentReport rep =
        eigenspace_alignment(eigs.vectors, eigs.values, eigs, M_full);
    for (double a : rep.angles) CHECK(a < 1e-6);
    // groups partition the computed window
    int covered = 0;
    for (const auto& [b, e] : rep.groups) covered += e - b;
    CHECK(covered == 5);
  }

  SUBCASE("sign flips do not change the subspace") {
    Eigen::MatrixXd flipped = eigs.vectors;
    flipped.col(0) *= -1.0;
    flipped.col(2) *= -1.0;
    const AlignmentReport rep =
        eigenspace_alignment(flipped, eigs.values, eigs, M_full);
    for (double a : rep.angles) CHECK(a < 1e-6);
  }

  SUBCASE("rotational symmetry pair is detected as a group of two") {
    // The second and third reference eigenvalues of the rotationally
    // symmetric limit operator form the sin/cos pair.
    const AlignmentReport rep =
        eigenspace_alignment(eigs.vectors, eigs.values, eigs, M_full);
    REQUIRE(rep.groups.size() >= 2);
    CHECK(rep.groups[1] == std::pair<int, int>{1, 3});
  }
}

TEST_CASE("csv schema") {
  ConvergenceTable table;
  table.scenario = "star_graph";
  table.rows.push_back({0.25, 1, 19.5, 19.7, 0.01, 0.002, 0.0003, 0.04});
  std::ostringstream os;
  write_csv(os, table);
  const std::string out = os.str();
  CHECK(out.rfind("scenario,eps,k,lambda_eps,lambda_hom,rel_err,l2_err,flux_dev,angle\n",
                  0) == 0);
  CHECK(out.find("star_graph,0.25,1,19.5,19.7,0.01,0.002,0.0003,0.04") !=
        std::string::npos);
}
