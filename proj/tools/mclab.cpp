// mclab command-line entry point.

#include "mclab/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"mclab: constant-rank and convexity laboratory"};
  app.set_version_flag("--version", std::string(MCLAB_VERSION));
  app.require_subcommand(1);

  mclab::cli::RunConfig config;
  std::uint64_t seed = 0;
  std::vector<std::string> tolerances;
  for (const char* name : {"check-operator", "analyze-field", "flow", "verify-lemmas"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config.scenario, "scenario JSON")->required();
    sub->add_option("--seed", seed, "random seed (overrides the scenario)");
    sub->add_option("--out", config.out, "output directory")->capture_default_str();
    sub->add_option("--tol", tolerances, "tolerance override NAME=VALUE (repeatable)");
    sub->callback([&config, sub] { config.subcommand = sub->get_name(); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mclab::cli::kUsage;
  }
  for (CLI::App* sub : app.get_subcommands())
    if (sub->count("--seed") > 0) config.seed = seed;
  for (const std::string& t : tolerances) {
    const auto eq = t.find('=');
    try {
      if (eq == std::string::npos) throw std::invalid_argument(t);
      config.tolerances[t.substr(0, eq)] = std::stod(t.substr(eq + 1));
    } catch (const std::exception&) {
      std::cerr << "mclab: --tol expects NAME=VALUE, got '" << t << "'\n";
      return mclab::cli::kUsage;
    }
  }
  return mclab::cli::run(config, std::cout, std::cerr);
}
