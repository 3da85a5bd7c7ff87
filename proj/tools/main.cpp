#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fedlab/config.hpp"
#include "fedlab/errors.hpp"
#include "fedlab/runner.hpp"

namespace {

int run_command(const std::string& config_path, const std::string& out_dir,
                std::int64_t seed_override, int rounds_override, int dump_samples,
                int eval_stride, int threads) {
  fedlab::ExperimentConfig cfg =
      config_path.empty() ? fedlab::ExperimentConfig{} : fedlab::parse_config(config_path);
  if (seed_override >= 0) cfg.fl.seed = static_cast<std::uint64_t>(seed_override);
  if (rounds_override > 0) cfg.fl.rounds = rounds_override;
  if (dump_samples >= 0) cfg.eval.dump_samples = dump_samples;
  if (eval_stride > 0) cfg.eval.stride = eval_stride;
  fedlab::validate_config(cfg);

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream echo(out_dir + "/config.ini");
    echo << fedlab::echo_config(cfg);
  }

  fedlab::Experiment exp(cfg, threads);
  std::ofstream csv(out_dir + "/metrics.csv");
  if (!csv) {
    std::cerr << "cannot write to " << out_dir << "\n";
    return 1;
  }
  try {
    exp.run(csv);
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
  exp.save_checkpoint(out_dir + "/checkpoint.bin");
  if (cfg.eval.dump_samples > 0)
    exp.dump_samples(out_dir + "/samples", cfg.eval.dump_samples);

  if (!exp.history().empty()) {
    const auto& last = exp.history().back();
    std::cout << "final round " << last.round << ": ca=" << last.ca << " ba=" << last.ba
              << "\n";
  }
  std::cout << "artifacts in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated learning backdoor lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::int64_t seed_override = -1;
  int rounds_override = 0;
  int dump_samples = -1;
  int eval_stride = 0;
  int threads = 0;

  auto* run = app.add_subcommand("run", "execute an experiment");
  run->add_option("-c,--config", config_path, "config file (defaults apply when omitted)");
  run->add_option("-o,--out", out_dir, "output directory");
  run->add_option("-s,--seed", seed_override, "seed override");
  run->add_option("-r,--rounds", rounds_override, "rounds override");
  run->add_option("--dump-samples", dump_samples, "clean/poisoned pairs to write");
  run->add_option("--eval-stride", eval_stride, "evaluate every n-th round");
  run->add_option("-t,--threads", threads, "client training threads (0 = auto)");

  auto* catalog = app.add_subcommand("catalog", "list attacks and defenses");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(catalog)) {
      std::cout << fedlab::list_catalog();
      return 0;
    }
    return run_command(config_path, out_dir, seed_override, rounds_override, dump_samples,
                       eval_stride, threads);
  } catch (const fedlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
