#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "homsurf/convergence.hpp"

namespace homsurf::cli {

inline constexpr const char* kVersion = "0.1.0";

struct OutputSpec {
  std::filesystem::path dir = "out";
  bool csv = true;
  bool svg = true;
  bool obj = true;
};

// Parsed and validated run configuration; defaults filled.
struct RunConfig {
  std::string scenario_name;
  geometry::ScenarioParams scenario_params;
  std::string profile_name = "sin2";
  double profile_period = -1.0;  // <0: scenario default
  std::vector<double> eps_list;
  int k_eigs = 5;
  convergence::MeshRule mesh_rule;
  double m = 0.0;
  std::string load_name = "none";
  double shift = 0.0;
  convergence::ReferenceRoute ref_route = convergence::ReferenceRoute::closed_form;
  std::uint64_t seed = 0x5EED;
  int jobs = 1;
  OutputSpec output;
  std::string config_text;  // raw file contents (hashed into the manifest)

  geometry::Scenario scenario() const;
  convergence::SweepConfig sweep() const;
};

// Key-value config with [scenario] / [sweep] / [output] sections; the grammar
// is documented in the README. Errors carry the line number.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);

struct RunManifest {
  std::map<std::string, std::string> config_echo;
  std::vector<std::string> files;  // absolute or dir-relative artifact paths
  std::map<std::string, double> stage_seconds;
  std::string version;
  std::string config_hash;
};

// Executes the sweeps and writes CSV / SVG / OBJ artifacts plus the manifest.
// Partial outputs are removed when a stage fails.
RunManifest run_scenario(const RunConfig& cfg);

// Log-log plot of rel_err against eps, one polyline per k. Hand-emitted SVG.
void write_svg_plot(std::ostream& os, const convergence::ConvergenceTable& table);

std::string config_hash_hex(const std::string& text);

}  // namespace homsurf::cli
