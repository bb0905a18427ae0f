#include <cstdio>
#include <cstdlib>
#include <exception>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lkemu/commands.hpp"
#include "lkemu/error.hpp"
#include "lkemu/parallel.hpp"

namespace {

struct Subcommand {
  const char* name;
  const char* help;
};

constexpr Subcommand kSubcommands[] = {
    {"pipeline", "synth (without input) -> fit -> adjust -> calibrate -> encode -> simulate"},
    {"synth", "write synthetic replicate fields"},
    {"fit", "moving-window Matern MLE at every grid box"},
    {"adjust", "apply the nugget-floor and range-cap rules to estimates"},
    {"calibrate", "build the range -> (a, level weights) table"},
    {"encode", "encode adjusted estimates into a nonstationary LK model"},
    {"simulate", "draw realizations from an encoded model"},
    {"validate", "compare LK with the convolution oracle on test case 1 or 2, or draw fig1 curves"},
    {"bench", "simulation timings and window-fit sweep scaling"},
};

std::string footer() {
  std::string out = "\nEvery key can also be set in a JSON --config file (a run manifest is accepted).\n"
                    "Precedence: defaults < LKEMU_WORKERS < --config < flags.\n"
                    "LKEMU_WORKERS sets the default worker count.\n\nOutput files (in output_dir):\n";
  for (const auto& f : lkemu::documented_outputs()) out += "  " + f.name + ": " + f.description + "\n";
  out += "\nFailures print one line 'error[<category>]: <message>' and exit with status 1.\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lkemu: local Matern fits encoded as a nonstationary LatticeKrig model", "lkemu"};
  app.require_subcommand(1);
  app.footer(footer());
  app.set_version_flag("--version", lkemu::tool_version());

  std::string config_file;
  app.add_option("--config", config_file, "JSON file of configuration keys")->check(CLI::ExistingFile);
  std::map<std::string, std::optional<std::string>> flags;
  for (const auto& key : lkemu::config_keys()) {
    app.add_option("--" + key.name, flags[key.name], key.help)->group("Configuration keys");
  }
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : kSubcommands) subs[s.name] = app.add_subcommand(s.name, s.help)->fallthrough();
  std::optional<std::string> case_arg;
  subs["validate"]->add_option("case", case_arg, "1, 2 or fig1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error[config]: %s\n", e.what());
    return 2;
  }

  try {
    lkemu::RunConfig config;
    config.workers = lkemu::default_workers();
    if (!config_file.empty()) lkemu::apply_settings(config, lkemu::read_config_file(config_file));
    std::map<std::string, std::string> overrides;
    for (const auto& [name, value] : flags) {
      if (value) overrides[name] = *value;
    }
    if (case_arg) overrides["validate_case"] = *case_arg;
    lkemu::apply_settings(config, overrides);
    std::string command;
    for (const auto& [name, sub] : subs) {
      if (sub->parsed()) command = name;
    }
    return lkemu::run_command(command, config);
  } catch (const lkemu::Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(lkemu::category_name(e.category())).c_str(), e.what());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
  }
  return 1;
}
