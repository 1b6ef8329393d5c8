#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "freebound/config.hpp"
#include "freebound/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Finite-horizon optimal stopping solver and structure checks"};
  std::string command;
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t refine = 0;
  std::string only;
  bool dry_run = false;
  app.add_option("command", command, "solve | geometry | verify | all")
      ->required()
      ->check(CLI::IsMember({"solve", "geometry", "verify", "all"}));
  app.add_option("--config", config_path, "run configuration (YAML)")->required();
  auto* out_opt = app.add_option("--out", out, "output directory (overrides the config)");
  auto* seed_opt = app.add_option("--seed", seed, "Monte Carlo seed (overrides the config)");
  app.add_option("--refine", refine, "number of refinement levels for refinement.csv (all only)");
  auto* only_opt = app.add_option("--only", only, "run a single named check");
  app.add_flag("--dry-run", dry_run, "validate the config and print the resolved setup");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : freebound::kExitValidation;
  }

  try {
    std::ifstream in(config_path);
    if (!in) throw freebound::ValidationError("cannot read config file " + config_path, 0);
    std::stringstream buf;
    buf << in.rdbuf();
    const freebound::RunConfig cfg = freebound::parse_config(buf.str());
    freebound::RunOptions opt;
    opt.command = freebound::parse_subcommand(command);
    if (*out_opt) opt.out = out;
    if (*seed_opt) opt.seed = seed;
    if (*only_opt) opt.only = only;
    opt.refine = refine;
    opt.dry_run = dry_run;
    return freebound::run(cfg, opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return freebound::exit_code_for(e);
  }
}
