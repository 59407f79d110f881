#include "homsurf/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "homsurf/limit_surface.hpp"

namespace homsurf::cli {

namespace fs = std::filesystem;

namespace {

int log_level() {
  const char* env = std::getenv("HOMSURF_LOG");
  if (!env) return 1;
  const std::string v = env;
  if (v == "quiet" || v == "0") return 0;
  if (v == "debug" || v == "2") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[homsurf] " << msg << "\n";
}

struct ConfigLine {
  std::string section, key, value;
  int number = 0;
};

std::vector<double> parse_number_list(const std::string& s, const std::string& where) {
  std::vector<double> out;
  std::string norm = s;
  std::replace(norm.begin(), norm.end(), ',', ' ');
  std::istringstream is(norm);
  double v;
  while (is >> v) out.push_back(v);
  if (!is.eof()) throw ConfigError(where + ": malformed number list '" + s + "'");
  return out;
}

bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(where + ": expected a boolean, got '" + s + "'");
}

double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + s + "'");
  }
  if (used != s.size()) throw ConfigError(where + ": trailing junk in number '" + s + "'");
  return v;
}

std::uint64_t parse_seed(const std::string& s, const std::string& where) {
  try {
    return std::stoull(s, nullptr, 0);  // accepts 0x... too
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected an integer seed, got '" + s + "'");
  }
}

}  // namespace

std::string config_hash_hex(const std::string& text) {
  // FNV-1a 64
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  cfg.config_text = text;

  std::vector<ConfigLine> lines;
  {
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int number = 0;
    while (std::getline(is, raw)) {
      ++number;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string line = trim(raw);
      if (line.empty()) continue;
      const std::string where = origin + ":" + std::to_string(number);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = line.substr(1, line.size() - 2);
        if (section != "scenario" && section != "sweep" && section != "output") {
          throw ConfigError(where + ": unknown section [" + section + "]");
        }
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      ConfigLine cl;
      cl.section = section;
      cl.key = trim(line.substr(0, eq));
      cl.value = trim(line.substr(eq + 1));
      cl.number = number;
      if (cl.section.empty()) throw ConfigError(where + ": key outside any section");
      if (cl.key.empty() || cl.value.empty()) {
        throw ConfigError(where + ": empty key or value");
      }
      lines.push_back(std::move(cl));
    }
  }

  double bump_radius = 0.3;
  std::vector<Vec2> bump_centers;

  for (const auto& cl : lines) {
    const std::string where = origin + ":" + std::to_string(cl.number);
    if (cl.section == "scenario") {
      if (cl.key == "name") {
        cfg.scenario_name = cl.value;
      } else if (cl.key == "profile") {
        cfg.profile_name = cl.value;
      } else if (cl.key == "period") {
        cfg.profile_period = parse_number(cl.value, where);
      } else if (cl.key == "R") {
        cfg.scenario_params.R = parse_number(cl.value, where);
      } else if (cl.key == "inner_cutoff") {
        cfg.scenario_params.inner_cutoff = parse_number(cl.value, where);
      } else if (cl.key == "bump_centers") {
        std::string norm = cl.value;
        std::replace(norm.begin(), norm.end(), ';', ' ');
        const auto nums = parse_number_list(norm, where);
        if (nums.size() % 2 != 0 || nums.empty()) {
          throw ConfigError(where + ": bump_centers needs x y pairs");
        }
        for (std::size_t i = 0; i < nums.size(); i += 2) {
          bump_centers.emplace_back(nums[i], nums[i + 1]);
        }
      } else if (cl.key == "bump_radius") {
        bump_radius = parse_number(cl.value, where);
      } else if (cl.key == "strip_phases") {
        const auto nums = parse_number_list(cl.value, where);
        if (nums.size() != 2) throw ConfigError(where + ": strip_phases needs two values");
        cfg.scenario_params.strip_phases = {nums[0], nums[1]};
      } else if (cl.key == "strip_width") {
        cfg.scenario_params.strip_width = parse_number(cl.value, where);
      } else {
        throw ConfigError(where + ": unknown scenario key '" + cl.key + "'");
      }
    } else if (cl.section == "sweep") {
      if (cl.key == "eps") {
        cfg.eps_list = parse_number_list(cl.value, where);
      } else if (cl.key == "k_eigs") {
        cfg.k_eigs = static_cast<int>(parse_number(cl.value, where));
      } else if (cl.key == "cells_per_eps") {
        cfg.mesh_rule.cells_per_eps = parse_number(cl.value, where);
      } else if (cl.key == "max_nodes") {
        cfg.mesh_rule.max_nodes = static_cast<long>(parse_number(cl.value, where));
      } else if (cl.key == "m") {
        cfg.m = parse_number(cl.value, where);
      } else if (cl.key == "shift") {
        cfg.shift = parse_number(cl.value, where);
      } else if (cl.key == "load") {
        cfg.load_name = cl.value;
      } else if (cl.key == "reference") {
        if (cl.value == "closed") {
          cfg.ref_route = convergence::ReferenceRoute::closed_form;
        } else if (cl.value == "cell") {
          cfg.ref_route = convergence::ReferenceRoute::cell_solve;
        } else {
          throw ConfigError(where + ": reference must be 'closed' or 'cell'");
        }
      } else {
        throw ConfigError(where + ": unknown sweep key '" + cl.key + "'");
      }
    } else {  // output
      if (cl.key == "dir") {
        cfg.output.dir = cl.value;
      } else if (cl.key == "csv") {
        cfg.output.csv = parse_bool(cl.value, where);
      } else if (cl.key == "svg") {
        cfg.output.svg = parse_bool(cl.value, where);
      } else if (cl.key == "obj") {
        cfg.output.obj = parse_bool(cl.value, where);
      } else if (cl.key == "seed") {
        cfg.seed = parse_seed(cl.value, where);
      } else if (cl.key == "jobs") {
        cfg.jobs = static_cast<int>(parse_number(cl.value, where));
      } else {
        throw ConfigError(where + ": unknown output key '" + cl.key + "'");
      }
    }
  }

  if (cfg.scenario_name.empty()) {
    throw ConfigError(origin + ": missing scenario name");
  }
  if (!bump_centers.empty()) {
    cfg.scenario_params.bumps.clear();
    for (const auto& c : bump_centers) {
      cfg.scenario_params.bumps.push_back({c, bump_radius});
    }
  }
  if (cfg.eps_list.empty()) throw ConfigError(origin + ": missing sweep eps list");
  for (std::size_t i = 1; i < cfg.eps_list.size(); ++i) {
    if (!(cfg.eps_list[i] < cfg.eps_list[i - 1])) {
      throw ConfigError(origin + ": eps list must be strictly decreasing");
    }
  }
  if (cfg.k_eigs < 1) throw ConfigError(origin + ": k_eigs must be >= 1");
  if (cfg.jobs < 1) throw ConfigError(origin + ": jobs must be >= 1");

  // Resolve the scenario once so unknown names and load names fail validation.
  (void)cfg.scenario();
  (void)convergence::loads_by_name(cfg.load_name);
  return cfg;
}

geometry::Scenario RunConfig::scenario() const {
  geometry::ScenarioParams params = scenario_params;
  // Per-scenario default periods: the paper mixes 2pi-, pi- and T-periodic
  // profiles.
  double period = profile_period;
  if (period <= 0.0) {
    period = (scenario_name == "radial_graph" || scenario_name == "local_bumps")
                 ? pi
                 : 2.0 * pi;
  }
  params.profile = geometry::profile_by_name(profile_name, period);
  return geometry::builtin_scenario(scenario_name, params);
}

convergence::SweepConfig RunConfig::sweep() const {
  convergence::SweepConfig sc;
  sc.scenario = scenario();
  sc.eps_list = eps_list;
  sc.k_eigs = k_eigs;
  sc.mesh_rule = mesh_rule;
  sc.m = m;
  sc.loads = convergence::loads_by_name(load_name);
  sc.shift = shift;
  sc.seed = seed;
  sc.jobs = jobs;
  sc.ref_route = ref_route;
  return sc;
}

// ---------------------------------------------------------------------------
// SVG plot
// ---------------------------------------------------------------------------

void write_svg_plot(std::ostream& os, const convergence::ConvergenceTable& table) {
  const int W = 640, H = 480, ML = 70, MR = 20, MT = 30, MB = 50;
  std::vector<double> xs, ys;
  int kmax = 0;
  for (const auto& r : table.rows) {
    if (r.k < 1) continue;
    kmax = std::max(kmax, r.k);
    if (r.eps > 0.0) xs.push_back(r.eps);
    if (r.rel_err > 0.0) ys.push_back(r.rel_err);
  }
  auto minmax = [](std::vector<double>& v, double fallback_lo, double fallback_hi) {
    if (v.empty()) return std::pair<double, double>{fallback_lo, fallback_hi};
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    double l = *lo, h = *hi;
    if (l == h) {
      l *= 0.5;
      h *= 2.0;
    }
    return std::pair<double, double>{l, h};
  };
  const auto [x_lo, x_hi] = minmax(xs, 1e-2, 1.0);
  const auto [y_lo, y_hi] = minmax(ys, 1e-6, 1.0);

  auto px = [&](double eps) {
    return ML + (std::log(eps) - std::log(x_lo)) /
                    (std::log(x_hi) - std::log(x_lo)) * (W - ML - MR);
  };
  auto py = [&](double v) {
    return H - MB - (std::log(v) - std::log(y_lo)) /
                        (std::log(y_hi) - std::log(y_lo)) * (H - MT - MB);
  };

  const char* palette[6] = {"#1f77b4", "#d62728", "#2ca02c",
                            "#9467bd", "#ff7f0e", "#8c564b"};
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
     << "\" height=\"" << H << "\">\n";
  os << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << (W - ML - MR)
     << "\" height=\"" << (H - MT - MB)
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-size=\"13\">eps (log)</text>\n";
  os << "<text x=\"16\" y=\"" << H / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
     << H / 2 << ")\">relative eigenvalue error (log)</text>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" "
     << "font-size=\"14\">" << table.scenario << "</text>\n";

  // axis ticks at the sweep's eps values and at decades of the error range
  for (double eps : std::vector<double>(xs.begin(), xs.end())) {
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" stroke=\"black\"/>\n",
                  px(eps), H - MB, px(eps), H - MB + 5);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\" font-size=\"11\">%g</text>\n",
                  px(eps), H - MB + 18, eps);
    os << buf;
  }
  for (int d = static_cast<int>(std::floor(std::log10(y_lo)));
       d <= static_cast<int>(std::ceil(std::log10(y_hi))); ++d) {
    const double v = std::pow(10.0, d);
    if (v < y_lo || v > y_hi) continue;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"black\"/>\n",
                  ML - 5, py(v), ML, py(v));
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\" font-size=\"11\">1e%d</text>\n",
                  ML - 8, py(v) + 4, d);
    os << buf;
  }

  for (int k = 1; k <= kmax; ++k) {
    std::string points;
    for (const auto& r : table.rows) {
      if (r.k != k || !(r.eps > 0.0) || !(r.rel_err > 0.0)) continue;
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", px(r.eps), py(r.rel_err));
      points += buf;
    }
    if (points.empty()) continue;
    const char* color = palette[(k - 1) % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%d\" font-size=\"12\" fill=\"%s\">k=%d</text>\n",
                  W - MR - 45, MT + 16 * k, color, k);
    os << buf;
  }
  os << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Scenario runner
// ---------------------------------------------------------------------------

namespace {

void merge_source_columns(convergence::ConvergenceTable& spectral,
                          const convergence::ConvergenceTable& source,
                          const std::vector<convergence::FluxResult>& flux) {
  for (auto& r : spectral.rows) {
    if (const auto* s = source.find(r.eps, 0)) r.l2_err = s->l2_err;
    for (const auto& f : flux) {
      if (f.eps == r.eps) r.flux_dev = f.max_deviation;
    }
  }
}

}  // namespace

RunManifest run_scenario(const RunConfig& cfg) {
  RunManifest manifest;
  manifest.version = kVersion;
  manifest.config_hash = config_hash_hex(cfg.config_text);

  const geometry::Scenario scen = cfg.scenario();
  const convergence::SweepConfig sweep = cfg.sweep();

  manifest.config_echo["scenario"] = cfg.scenario_name;
  manifest.config_echo["profile"] = cfg.profile_name;
  manifest.config_echo["load"] = cfg.load_name;
  {
    std::string eps;
    char buf[32];
    for (double e : cfg.eps_list) {
      std::snprintf(buf, sizeof buf, "%.12g ", e);
      eps += buf;
    }
    manifest.config_echo["eps"] = eps;
    manifest.config_echo["k_eigs"] = std::to_string(cfg.k_eigs);
    std::snprintf(buf, sizeof buf, "0x%llX",
                  static_cast<unsigned long long>(cfg.seed));
    manifest.config_echo["seed"] = buf;
    manifest.config_echo["shift"] = std::to_string(cfg.shift);
  }

  std::vector<fs::path> written;
  auto cleanup = [&written]() {
    for (const auto& p : written) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  };

  const char* stage = "setup";
  try {
    std::error_code ec;
    fs::create_directories(cfg.output.dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" +
                              cfg.output.dir.string() + "': " + ec.message());
    {
      std::ofstream probe(cfg.output.dir / ".homsurf_probe");
      if (!probe) throw ConfigError("output directory not writable");
    }
    fs::remove(cfg.output.dir / ".homsurf_probe", ec);

    auto timed = [&manifest](const char* name, auto&& fn) {
      const auto t0 = std::chrono::steady_clock::now();
      auto result = fn();
      const auto t1 = std::chrono::steady_clock::now();
      manifest.stage_seconds[name] =
          std::chrono::duration<double>(t1 - t0).count();
      log_info(std::string(name) + " done in " +
               std::to_string(manifest.stage_seconds[name]) + " s");
      return result;
    };

    stage = "spectral";
    convergence::ConvergenceTable table =
        timed("spectral", [&] { return convergence::spectral_sweep(sweep); });

    if (sweep.loads.present()) {
      stage = "source";
      const convergence::ConvergenceTable source =
          timed("source", [&] { return convergence::source_sweep(sweep); });
      stage = "flux";
      const std::vector<convergence::FluxResult> flux = timed("flux", [&] {
        return convergence::flux_weak_test(sweep,
                                           convergence::default_flux_fields(scen));
      });
      merge_source_columns(table, source, flux);
    }

    if (cfg.output.csv) {
      stage = "csv";
      const fs::path p = cfg.output.dir / (cfg.scenario_name + "_table.csv");
      std::ofstream os(p, std::ios::binary);
      convergence::write_csv(os, table);
      if (!os) throw NumericError("failed writing " + p.string());
      written.push_back(p);
      manifest.files.push_back(p.string());
    }

    if (cfg.output.svg) {
      stage = "svg";
      const fs::path p = cfg.output.dir / (cfg.scenario_name + "_relerr.svg");
      std::ofstream os(p, std::ios::binary);
      write_svg_plot(os, table);
      if (!os) throw NumericError("failed writing " + p.string());
      written.push_back(p);
      manifest.files.push_back(p.string());
    }

    if (cfg.output.obj && scen.has_immersion()) {
      stage = "obj";
      auto obj_size = [&](double eps) {
        const convergence::MeshSize ms =
            convergence::mesh_for_eps(scen, eps, cfg.mesh_rule);
        return convergence::MeshSize{std::min(ms.n1, 192), std::min(ms.n2, 384)};
      };
      char name[64];
      for (double eps : cfg.eps_list) {
        std::snprintf(name, sizeof name, "%s_eps_%.6g.obj",
                      cfg.scenario_name.c_str(), eps);
        const fs::path p = cfg.output.dir / name;
        std::ofstream os(p, std::ios::binary);
        const convergence::MeshSize ms = obj_size(eps);
        limit_surface::export_obj(os, scen.immersion(eps, cfg.shift), scen.domain,
                                  ms.n1, ms.n2);
        if (!os) throw NumericError("failed writing " + p.string());
        written.push_back(p);
        manifest.files.push_back(p.string());
      }
      const fs::path p = cfg.output.dir / (cfg.scenario_name + "_limit.obj");
      std::ofstream os(p, std::ios::binary);
      const limit_surface::LimitEmbedding emb = limit_surface::limit_embedding(scen);
      const convergence::MeshSize ms = obj_size(cfg.eps_list.back());
      limit_surface::export_obj(os, emb.h0, scen.domain, ms.n1, ms.n2);
      if (!os) throw NumericError("failed writing " + p.string());
      written.push_back(p);
      manifest.files.push_back(p.string());
    }

    stage = "manifest";
    nlohmann::json j;
    j["version"] = manifest.version;
    j["config_hash"] = manifest.config_hash;
    j["config"] = manifest.config_echo;
    j["files"] = manifest.files;
    j["stage_seconds"] = manifest.stage_seconds;
    const fs::path p = cfg.output.dir / "manifest.json";
    std::ofstream os(p, std::ios::binary);
    os << j.dump(2) << "\n";
    if (!os) throw NumericError("failed writing " + p.string());
    manifest.files.push_back(p.string());
  } catch (const ConfigError& e) {
    cleanup();
    throw ConfigError("stage " + std::string(stage) + ": " + e.what());
  } catch (const std::exception& e) {
    cleanup();
    throw NumericError("stage " + std::string(stage) + ": " + e.what());
  }
  return manifest;
}

}  // namespace homsurf::cli
