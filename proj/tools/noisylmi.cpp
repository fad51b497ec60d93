// noisylmi: state-feedback synthesis from input-state data with bounded
// measurement errors. Subcommands: simulate, synth, verify, sweep.

#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "noisylmi/cli.hpp"
#include "noisylmi/errors.hpp"

namespace {

struct SharedFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double margin = 0.0;
  bool margin_set = false;
  long long samples = 0;
  bool samples_set = false;
  std::string out_dir;
  bool out_set = false;
};

void add_shared(CLI::App* cmd, SharedFlags& flags, const char* config_help) {
  cmd->add_option("--config", flags.config_path, config_help)->required();
  cmd->add_option("--seed", flags.seed, "Override the experiment / sweep seed")
      ->each([&flags](const std::string&) { flags.seed_set = true; });
  cmd->add_option("--margin", flags.margin, "Override the solver strictness margin factor")
      ->each([&flags](const std::string&) { flags.margin_set = true; });
  cmd->add_option("--samples", flags.samples, "Override the verification sample count")
      ->each([&flags](const std::string&) { flags.samples_set = true; });
  cmd->add_option("--out", flags.out_dir, "Override the output directory")
      ->each([&flags](const std::string&) { flags.out_set = true; });
}

noisylmi::cli::CommandOptions to_options(const SharedFlags& flags) {
  noisylmi::cli::CommandOptions opts;
  opts.config_path = flags.config_path;
  if (flags.seed_set) opts.seed_override = flags.seed;
  if (flags.margin_set) opts.margin_override = flags.margin;
  if (flags.samples_set) opts.samples_override = static_cast<Eigen::Index>(flags.samples);
  if (flags.out_set) opts.out_override = flags.out_dir;
  return opts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controller synthesis from input-state data with bounded measurement errors"};
  app.require_subcommand(1);

  SharedFlags flags;
  CLI::App* simulate = app.add_subcommand("simulate", "Run the data-collection experiment and write the measured trajectory CSV");
  CLI::App* synth = app.add_subcommand("synth", "Synthesize a state-feedback gain and verify the certificate");
  CLI::App* verify = app.add_subcommand("verify", "Re-verify the certificates stored in a run record");
  CLI::App* sweep = app.add_subcommand("sweep", "Run the feasibility sweep over (T, theta) and emit CSV + heatmaps");
  add_shared(simulate, flags, "Run configuration file");
  add_shared(synth, flags, "Run configuration file");
  add_shared(verify, flags, "Run-record file produced by synth");
  add_shared(sweep, flags, "Run configuration file with a [sweep] section");

  CLI11_PARSE(app, argc, argv);

  const auto opts = to_options(flags);
  std::string command = "";
  if (simulate->parsed()) command = "simulate";
  if (synth->parsed()) command = "synth";
  if (verify->parsed()) command = "verify";
  if (sweep->parsed()) command = "sweep";
  return noisylmi::cli::dispatch(command, opts, std::cout, std::cerr);
}
