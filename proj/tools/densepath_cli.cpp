#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "densepath/pipeline.hpp"

namespace {

constexpr int kExitUsage = 2;

void add_common_flags(CLI::App* cmd, densepath::CommandOptions& opt, bool config_required) {
  auto* config = cmd->add_option("--config", opt.config_path, "experiment config JSON");
  if (config_required) config->required();
  cmd->add_option("--out", opt.out_dir, "output directory (overrides the config)");
  cmd->add_flag("--force", opt.force, "overwrite existing outputs");
  cmd->add_option("--workers", opt.workers, "parallel jobs for seeds and sweep points")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "densepath: an exact token-tree laboratory for teacher-forced training, dense reward "
      "recovery, and path-level policy gradients"};
  app.require_subcommand(1);

  densepath::CommandOptions opt;
  CLI::App* gen = app.add_subcommand("gen", "generate the environment and demonstration dataset");
  add_common_flags(gen, opt, true);
  CLI::App* sft = app.add_subcommand("sft", "train the teacher-forced policy and its baseline");
  add_common_flags(sft, opt, true);
  CLI::App* dpr = app.add_subcommand("dpr", "run policy-gradient training for every seed");
  add_common_flags(dpr, opt, true);
  CLI::App* sweep = app.add_subcommand("sweep", "run the configured discount or baseline sweep");
  add_common_flags(sweep, opt, true);
  CLI::App* heatmap = app.add_subcommand("heatmap", "export per-token reward heatmaps");
  add_common_flags(heatmap, opt, true);
  CLI::App* verify = app.add_subcommand("verify", "run the invariant check suites");
  verify->add_option("--level", opt.level, "fast or full")
      ->check(CLI::IsMember({"fast", "full"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(gen)) return densepath::cmd_gen(opt, std::cout);
    if (app.got_subcommand(sft)) return densepath::cmd_sft(opt, std::cout);
    if (app.got_subcommand(dpr)) return densepath::cmd_dpr(opt, std::cout);
    if (app.got_subcommand(sweep)) return densepath::cmd_sweep(opt, std::cout);
    if (app.got_subcommand(heatmap)) return densepath::cmd_heatmap(opt, std::cout);
    if (app.got_subcommand(verify)) return densepath::cmd_verify(opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
