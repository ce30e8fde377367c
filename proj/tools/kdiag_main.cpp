#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kdiag/scenario.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, int code) {
  nlohmann::json err = {{"error", kind}, {"message", message}};
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kdiag: diagonal approximation experiments on weighted block "
               "operator models"};
  app.require_subcommand(1);

  std::string config_path, csv_path, out_path, kind = "convergence";

  CLI::App* run = app.add_subcommand("run", "run a scenario config");
  run->add_option("config", config_path, "scenario config (JSON)")
      ->required();

  CLI::App* validate =
      app.add_subcommand("validate", "validate a scenario config");
  validate->add_option("config", config_path, "scenario config (JSON)")
      ->required();

  CLI::App* plot = app.add_subcommand("plot", "render a results.csv to SVG");
  plot->add_option("csv", csv_path, "results.csv produced by run")
      ->required();
  plot->add_option("--kind", kind, "plot kind (convergence)");
  plot->add_option("--out", out_path, "output SVG path (default: csv + .svg)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      kdiag::ScenarioConfig config =
          kdiag::ScenarioConfig::from_json_file(config_path);
      kdiag::RunOutcome outcome = kdiag::run_scenario(config);
      if (outcome.exit_code != 0)
        return fail(outcome.error_kind, outcome.message, outcome.exit_code);
      std::cout << "wrote " << config.output_dir << "/results.csv ("
                << outcome.rows.size() << " rows)\n";
      return 0;
    }
    if (validate->parsed()) {
      kdiag::ScenarioConfig config =
          kdiag::ScenarioConfig::from_json_file(config_path);
      config.validate();
      std::cout << "ok\n";
      return 0;
    }
    if (plot->parsed()) {
      std::string svg = out_path.empty() ? csv_path + ".svg" : out_path;
      kdiag::plot_csv(csv_path, kind, svg);
      std::cout << "wrote " << svg << "\n";
      return 0;
    }
  } catch (const kdiag::ValidationError& e) {
    return fail("config-error", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime-error", e.what(), 1);
  }
  return 0;
}
