#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lineagelab/cli.hpp"

int main(int argc, char** argv) {
  namespace cli = lineagelab::cli;
  CLI::App app{"Trait dynamics and ancestral lineages under a moving optimum"};
  app.set_version_flag("--version", std::string(lineagelab::kVersion));
  app.require_subcommand(1);

  cli::Request req;
  std::int64_t seed = -1;
  for (const auto& name : cli::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", req.config_path, "JSON configuration file")->required();
    sub->add_option("--out", req.out_dir, "output directory")->required();
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--set", req.overrides, "override a config entry, key=value")->allow_extra_args(false);
    sub->callback([&req, name] { req.subcommand = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kInvalid;
  }
  if (seed >= 0) req.seed = static_cast<std::uint64_t>(seed);
  return cli::run(req);
}
