#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "psf/cli.hpp"

int main(int argc, char ** argv)
{
  CLI::App app{"Predictive safety filter with Lyapunov decrease constraint"};
  app.require_subcommand(1);

  std::string config, design, output, input;

  auto * design_cmd = app.add_subcommand("design", "Compute tightened sets, terminal set and certificates");
  design_cmd->add_option("-c,--config", config, "Run configuration (JSON)")->required();
  design_cmd->add_option("-o,--output", output, "Design artifact to write")->required();

  auto * sim_cmd = app.add_subcommand("simulate", "Run the closed-loop experiments");
  sim_cmd->add_option("-c,--config", config, "Run configuration (JSON)")->required();
  sim_cmd->add_option("-d,--design", design, "Design artifact from `psf design`")->required();
  sim_cmd->add_option("-o,--output", output, "Output directory (default: output.directory of the config)");

  auto * report_cmd = app.add_subcommand("report", "Plot trajectories and tabulate metrics");
  report_cmd->add_option("-i,--input", input, "Directory written by `psf simulate`")->required();
  report_cmd->add_option("-o,--output", output, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : psf::kExitConfig;
  }

  if (*design_cmd) { return psf::cmd_design(config, output, std::cout, std::cerr); }
  if (*sim_cmd) { return psf::cmd_simulate(config, design, output, std::cout, std::cerr); }
  return psf::cmd_report(input, output, std::cout, std::cerr);
}
