#include <CLI11.hpp>

#include <cstdint>
#include <iostream>

#include "homsurf/cli.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 numerical failure.
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct RunFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool no_obj = false;
  bool no_svg = false;
  int jobs = 0;
};

int do_run(const RunFlags& flags) {
  homsurf::cli::RunConfig cfg = homsurf::cli::parse_config(flags.config_path);
  if (!flags.out_dir.empty()) cfg.output.dir = flags.out_dir;
  if (flags.seed_set) cfg.seed = flags.seed;
  if (flags.no_obj) cfg.output.obj = false;
  if (flags.no_svg) cfg.output.svg = false;
  if (flags.jobs > 0) cfg.jobs = flags.jobs;

  const homsurf::cli::RunManifest manifest = homsurf::cli::run_scenario(cfg);
  for (const auto& f : manifest.files) std::cout << f << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homsurf: homogenized limits and spectra of oscillating surfaces"};
  app.require_subcommand(1);

  RunFlags flags;
  CLI::App* run = app.add_subcommand("run", "execute a scenario config");
  run->add_option("config", flags.config_path, "config file")->required();
  run->add_option("--out", flags.out_dir, "output directory override");
  run->add_option("--seed", flags.seed, "eigensolver seed override")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  run->add_flag("--no-obj", flags.no_obj, "skip OBJ surface export");
  run->add_flag("--no-svg", flags.no_svg, "skip SVG plot");
  run->add_option("--jobs", flags.jobs, "concurrent eps rows");

  CLI::App* list = app.add_subcommand("list-scenarios", "print scenario names");

  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate", "parse and validate a config");
  validate->add_option("config", validate_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (run->parsed()) return do_run(flags);
    if (list->parsed()) {
      for (const auto& name : homsurf::geometry::scenario_names()) {
        std::cout << name << "\n";
      }
      return 0;
    }
    if (validate->parsed()) {
      homsurf::cli::parse_config(validate_path);
      std::cout << "ok\n";
      return 0;
    }
  } catch (const homsurf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
