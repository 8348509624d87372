#include "needlesim/config.hpp"
#include "needlesim/log.hpp"
#include "needlesim/simulation.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace needlesim;
  CLI::App app{"Needle insertion simulator"};
  std::string scenario;
  std::string out = "out";
  std::optional<int> steps, max_depth, uniform_refine, vtk_every;
  std::optional<double> theta, tau;
  bool quiet = false;
  app.add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out, "Output directory");
  app.add_option("--steps", steps, "Number of steps");
  app.add_option("--theta", theta, "Refinement threshold in (0,1)");
  app.add_option("--tau", tau, "Time step [s]");
  app.add_option("--max-depth", max_depth, "Maximum refinement depth");
  app.add_option("--uniform-refine", uniform_refine, "Uniform refinement levels (disables adaptivity)");
  app.add_option("--vtk-every", vtk_every, "VTK snapshot stride (0 disables)");
  app.add_flag("-q,--quiet", quiet, "Only report warnings and errors");
  CLI11_PARSE(app, argc, argv);
  log::set_level(quiet ? log::Level::kWarning : log::Level::kInfo);

  ScenarioConfig config;
  try {
    config = load_scenario(scenario);
    if (steps) config.steps = *steps;
    if (theta) config.theta = *theta;
    if (tau) config.tau = *tau;
    if (max_depth) config.max_depth = *max_depth;
    if (uniform_refine) {
      config.uniform_refine = *uniform_refine;
      config.adaptive = false;
    }
    if (vtk_every) config.vtk_every = *vtk_every;
    config.validate();
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return run_simulation(config, out);
}
