// rpdesign: robust precoder design experiments.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "robust_precoding/acceptance.hpp"
#include "robust_precoding/experiment.hpp"

namespace {

struct CommonOptions {
  std::string spec_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> mc;
  std::vector<double> targets;
  bool snr_db = false;
  std::optional<int> workers;
  bool verbose = false;
};

rbp::ExperimentSpec load_spec(rbp::ExperimentMode mode, const CommonOptions& o) {
  rbp::ExperimentSpec spec = rbp::default_experiment(mode);
  if (!o.spec_file.empty()) {
    std::ifstream in(o.spec_file);
    if (!in) throw rbp::ConfigError("cannot open spec file " + o.spec_file);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw rbp::ConfigError(std::string("spec file: ") + e.what());
    }
    if (!j.contains("mode")) j["mode"] = rbp::to_string(mode);
    spec = j.get<rbp::ExperimentSpec>();
    if (spec.mode != mode)
      throw rbp::ConfigError(std::string("spec file mode '") + rbp::to_string(spec.mode) + "' does not match the subcommand");
  }
  if (o.seed) {
    spec.channel.seed = *o.seed;
    spec.channel.phases.reset();
  }
  if (o.out) spec.output_dir = *o.out;
  if (o.mc) spec.mc_count = *o.mc;
  if (!o.targets.empty()) {
    spec.targets = o.targets;
    spec.target_unit = o.snr_db ? rbp::TargetUnit::snr_db : rbp::TargetUnit::power;
  } else if (o.snr_db) {
    spec.target_unit = rbp::TargetUnit::snr_db;
  }
  if (o.workers) spec.workers = *o.workers;
  return spec;
}

int run_mode(rbp::ExperimentMode mode, const CommonOptions& o) {
  const auto spec = load_spec(mode, o);
  const auto outcome = rbp::run(spec);
  std::cout << rbp::to_string(mode) << ": " << outcome.summary << "; wrote " << outcome.files.size() << " files to "
            << spec.output_dir << '\n';
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust MU-MISO precoder design under imperfect CSIT"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rbp::kToolVersion);

  CommonOptions common;
  const std::vector<std::pair<const char*, rbp::ExperimentMode>> modes{
      {"power-min", rbp::ExperimentMode::power_min},
      {"ammse-min", rbp::ExperimentMode::ammse_min},
      {"ignorant", rbp::ExperimentMode::ammse_min_ignorant},
      {"duality-check", rbp::ExperimentMode::duality_check},
      {"moment-check", rbp::ExperimentMode::moment_check},
  };
  const std::vector<const char*> descriptions{
      "Minimise transmit power under per-user AMMSE targets",
      "Minimise the worst-user AMMSE under a power budget",
      "CSIT-only (ignorant) max-AMMSE design baseline",
      "Round-trip AMMSE targets through power minimisation and bisection",
      "Check the quartic moment closed form against brute-force sampling",
  };
  std::vector<std::pair<CLI::App*, rbp::ExperimentMode>> mode_commands;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    auto* sub = app.add_subcommand(modes[i].first, descriptions[i]);
    sub->add_option("--spec", common.spec_file, "ExperimentSpec JSON file");
    sub->add_option("--seed", common.seed, "phase seed of the estimated channels (overrides explicit phases)");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--mc", common.mc, "Monte-Carlo draws (per case for moment-check)");
    sub->add_option("--targets", common.targets, "override the spec targets")->delimiter(',');
    sub->add_flag("--snr-db", common.snr_db, "budget targets are SNRs in dB");
    sub->add_option("--workers", common.workers, "concurrent sweep points")->check(CLI::PositiveNumber);
    sub->add_flag("-v,--verbose", common.verbose, "debug logging");
    mode_commands.emplace_back(sub, modes[i].second);
  }

  rbp::acceptance::Options accept_options;
  bool accept_verbose = false;
  auto* accept = app.add_subcommand("accept", "Run the acceptance suite");
  accept->add_option("--only", accept_options.only, "criterion ids to run")->delimiter(',');
  accept->add_option("--workers", accept_options.workers, "threads (0: all cores)");
  accept->add_flag("--list", "list criterion ids and exit");
  accept->add_flag("-v,--verbose", accept_verbose, "debug logging");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? rbp::exit_ok : rbp::exit_config;
  }
  spdlog::set_level(common.verbose || accept_verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (accept->parsed()) {
      if (accept->count("--list")) {
        for (const auto& id : rbp::acceptance::criterion_ids()) std::cout << id << '\n';
        return rbp::exit_ok;
      }
      const auto results = rbp::acceptance::run(
          accept_options, [](const auto& r) { std::cout << rbp::acceptance::format(r) << std::endl; });
      return rbp::acceptance::all_passed(results) ? rbp::exit_ok : rbp::exit_check_failed;
    }
    for (const auto& [sub, mode] : mode_commands)
      if (sub->parsed()) return run_mode(mode, common);
  } catch (const rbp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return rbp::exit_config;
  } catch (const rbp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return rbp::exit_numerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rbp::exit_other;
  }
  return rbp::exit_other;
}
