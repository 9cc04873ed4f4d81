#include "fluctua/cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"fluctua: fluctuation-induced interactions between polarizable bodies"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_path;
  std::optional<unsigned> threads;
  auto* run = app.add_subcommand("run", "Evaluate a scenario config");
  run->add_option("--config", config_path, "Scenario JSON")->required();
  run->add_option("--output", output_path, "Result CSV (overrides the config)");
  run->add_option("--threads", threads, "Worker threads (default FLUCTUA_THREADS or 1)");

  fluctua::cli::OracleSuiteOptions oracle_opts;
  std::string oracle_output;
  std::optional<int> inject;
  auto* oracle = app.add_subcommand("oracle", "Run the lattice oracle suite");
  oracle->add_option("--seed", oracle_opts.seed, "Base seed");
  oracle->add_option("--instances", oracle_opts.instances, "Number of instances");
  oracle->add_option("--output", oracle_output, "Per-instance CSV")->required();
  oracle->add_option("--inject-sign-fault", inject)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : fluctua::cli::kInvalidInput;
  }

  if (*run) {
    return fluctua::cli::run(config_path, output_path,
                             fluctua::cli::resolve_threads(threads), std::cerr);
  }
  oracle_opts.corrupt_instance = inject;
  return fluctua::cli::oracle_suite(oracle_opts, oracle_output, std::cerr);
}
