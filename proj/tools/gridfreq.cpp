// gridfreq: scenario-driven frequency-control experiments.
//
//   gridfreq <mode> --scenario <path> [--sweep k=0.001:0.02:20] [--seed N] [--out DIR]
//
// Modes: simulate | steady | h2sweep | certify | tune.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridfreq/experiments.hpp"
#include "gridfreq/scenario.hpp"

namespace {

// "k=0.001:0.02:20" -> 20 linearly spaced values of k from 0.001 to 0.02.
struct SweepSpec {
  std::string variable;
  std::vector<double> values;
};

SweepSpec parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    throw gridfreq::validation_error("--sweep expects var=start:stop:count");
  SweepSpec s;
  s.variable = text.substr(0, eq);
  const std::string rest = text.substr(eq + 1);
  const auto c1 = rest.find(':');
  const auto c2 = rest.find(':', c1 == std::string::npos ? 0 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw gridfreq::validation_error("--sweep expects var=start:stop:count");
  const double start = std::stod(rest.substr(0, c1));
  const double stop = std::stod(rest.substr(c1 + 1, c2 - c1 - 1));
  const int count = std::stoi(rest.substr(c2 + 1));
  if (count < 1) throw gridfreq::validation_error("--sweep count must be >= 1");
  for (int i = 0; i < count; ++i)
    s.values.push_back(count == 1 ? start : start + (stop - start) * i / (count - 1));
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-control simulation and analysis toolkit"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  std::string sweep_text;
  std::uint64_t seed_override = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
    cmd->add_option("--out", out_dir, "Output directory");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { seed_override = v; seed_set = true; },
        "Master seed override");
    return cmd;
  };

  auto* simulate = add_common(app.add_subcommand("simulate", "Time-domain closed-loop runs"));
  auto* steady = add_common(app.add_subcommand("steady", "Synchronous steady states and dispatch"));
  auto* h2sweep = add_common(app.add_subcommand("h2sweep", "H2 norms over a gain grid"));
  h2sweep->add_option("--sweep", sweep_text, "Grid: k=start:stop:count or tau=start:stop:count");
  auto* certify = add_common(app.add_subcommand("certify", "Stability/ISS certificate"));
  auto* tune = add_common(app.add_subcommand("tune", "Metric sweeps and gain selection"));

  CLI11_PARSE(app, argc, argv);

  try {
    gridfreq::ScenarioSpec sc = gridfreq::load_scenario(scenario_path);
    if (seed_set) {
      sc.seed = seed_override;
      sc.noise.seed = seed_override;
    }

    std::vector<std::string> files;
    if (simulate->parsed()) {
      files = gridfreq::run_simulate(sc, out_dir);
    } else if (steady->parsed()) {
      files = gridfreq::run_steady(sc, out_dir);
    } else if (h2sweep->parsed()) {
      std::vector<double> ks, taus;
      if (!sweep_text.empty()) {
        const SweepSpec s = parse_sweep(sweep_text);
        if (s.variable == "k")
          ks = s.values;
        else if (s.variable == "tau")
          taus = s.values;
        else
          throw gridfreq::validation_error("--sweep variable must be k or tau");
      }
      files = gridfreq::run_h2sweep(sc, out_dir, ks, taus);
    } else if (certify->parsed()) {
      files = gridfreq::run_certify(sc, out_dir);
    } else if (tune->parsed()) {
      files = gridfreq::run_tune(sc, out_dir);
    }

    for (const std::string& f : files) std::printf("wrote %s\n", f.c_str());
    return 0;
  } catch (const gridfreq::validation_error& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return 1;
  } catch (const gridfreq::numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
