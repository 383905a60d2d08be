#include <CLI11.hpp>

#include <iostream>

#include "cli.hpp"

using namespace sensipw;
using namespace sensipw::cli;

namespace {

void add_common(CLI::App* cmd, CommonOptions& c) {
  cmd->add_option("--lambda", c.lambdas, "Sensitivity parameter log(Lambda); repeatable");
  cmd->add_option("--alpha", c.alpha, "Miscoverage level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--bootstrap,-B", c.B, "Number of bootstrap resamples");
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--workers", c.workers, "Worker threads (0: all cores; default $SENSIPW_WORKERS)");
  cmd->add_option("--out,-o", c.out, "Output file (default stdout)");
  cmd->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity intervals for IPW estimators under the marginal sensitivity model"};
  app.require_subcommand(1);

  CommonOptions analyze_common, simulate_common;
  AnalyzeOptions ao;
  auto* analyze = app.add_subcommand("analyze", "Point and bootstrap intervals for a CSV dataset");
  analyze->add_option("--input,-i", ao.input, "CSV file with a header row")->required();
  analyze->add_option("--estimand", ao.estimand)->check(CLI::IsMember({"mean", "mu0", "ate", "att"}));
  analyze->add_option("--method", ao.method)->check(CLI::IsMember({"sipw", "saipw"}));
  analyze->add_option("--outcome", ao.outcome, "Outcome column");
  analyze->add_option("--treatment", ao.treatment, "Treatment or response-indicator column");
  analyze->add_option("--covariates", ao.covariates, "Covariate columns (default: all others)")
      ->delimiter(',');
  analyze->add_option("--lipschitz", ao.lipschitz, "Lipschitz bound L on the deviation");
  analyze->add_option("--plot", ao.plot, "Write an SVG interval plot");
  add_common(analyze, analyze_common);

  SimulateOptions so;
  auto* simulate = app.add_subcommand("simulate", "Coverage study on the discrete simulation model");
  simulate->add_option("--beta-a", so.beta_A);
  simulate->add_option("--beta-y", so.beta_Y);
  simulate->add_option("--reps", so.reps)->check(CLI::PositiveNumber);
  simulate->add_option("--n", so.n)->check(CLI::PositiveNumber);
  add_common(simulate, simulate_common);

  OracleOptions oo;
  auto* oracle = app.add_subcommand("oracle", "Cross-check extremum solvers on a JSON instance");
  oracle->add_option("--input,-i", oo.input, "JSON instance {y, w, lambda|Lambda, ...}")->required();
  oracle->add_flag("--no-brute-force", oo.no_brute_force);
  oracle->add_option("--out,-o", oo.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << io::error_json(Error(Errc::invalid_argument, e.what())).dump() << '\n';
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (analyze->parsed()) run_analyze(ao, analyze_common);
    else if (simulate->parsed()) run_simulate(so, simulate_common);
    else run_oracle(oo);
  } catch (const Error& e) {
    std::cerr << io::error_json(e).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << io::error_json(Error(Errc::internal, e.what())).dump() << '\n';
    return 1;
  }
  return 0;
}
