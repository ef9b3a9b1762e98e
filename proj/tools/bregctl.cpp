#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "bregctl/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bregman-divergence controller synthesis and simulation"};
  app.require_subcommand(1, 1);

  std::string config;
  std::string out;
  std::int64_t seed_offset = 0;
  for (const char* name : {"synthesize", "simulate", "verify", "compare"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config, "run config (JSON or TOML)")->required();
    sub->add_option("--out", out, "output directory (default: output.directory, then $BREGCTL_OUT_DIR)");
    sub->add_option("--seed-offset", seed_offset, "added to every simulation seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : bregctl::kExitUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::optional<std::string> out_dir;
  if (!out.empty()) out_dir = out;
  return bregctl::run_command(command, config, out_dir, seed_offset, std::cout, std::cerr);
}
