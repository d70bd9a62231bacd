#include <CLI11.hpp>

#include <iostream>

#include "srlc/app/commands.hpp"
#include "srlc/common/error.hpp"

namespace app = srlc::app;

int main(int argc, char** argv) {
  CLI::App cli{"Structured recurrent policies for learned feedback control"};
  cli.require_subcommand(1);

  app::TrainArgs train;
  std::string seeds;
  long steps = 0;
  std::string out;
  auto* train_cmd = cli.add_subcommand("train", "Train one policy per seed");
  train_cmd->add_option("--config", train.config, "Experiment config")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out, "Run directory (default: run.output_dir)");
  train_cmd->add_option("--seeds", seeds, "Seed list override, e.g. 0..4 or 0,2,5");
  train_cmd->add_option("--steps", steps, "total_steps override")->check(CLI::PositiveNumber);

  app::EvalArgs eval;
  std::string mode = "track";
  std::string checkpoint;
  std::string eval_out;
  auto* eval_cmd = cli.add_subcommand("eval", "Closed-loop tracking evaluation of trained checkpoints");
  eval_cmd->add_option("run_dir", eval.run_dir, "Directory written by train")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "Single checkpoint instead of every seed's final.srlc");
  eval_cmd->add_option("--mode", mode, "track | ablate");
  eval_cmd->add_option("--out", eval_out, "Output CSV");

  app::StatefitArgs statefit;
  std::string statefit_checkpoint;
  auto* statefit_cmd = cli.add_subcommand("statefit", "Regress true plant states on the policy's estimate");
  statefit_cmd->add_option("run_dir", statefit.run_dir, "Directory written by train")->required();
  statefit_cmd->add_option("--checkpoint", statefit_checkpoint, "Single checkpoint");

  bool inject_fault = false;
  auto* verify_cmd = cli.add_subcommand("verify", "Run the numerical self-checks");
  verify_cmd->add_flag("--inject-fault", inject_fault, "Corrupt the tanh backward rule");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? app::kExitOk : app::kExitUsage;
  }

  try {
    if (*train_cmd) {
      if (!out.empty()) train.out = out;
      if (!seeds.empty()) train.seeds = app::parse_seed_list(seeds);
      if (steps > 0) train.steps = steps;
      const auto dir = app::cmd_train(train, std::cout);
      std::cout << "run directory " << dir.string() << "\n";
    } else if (*eval_cmd) {
      eval.mode = app::parse_eval_mode(mode);
      if (!checkpoint.empty()) eval.checkpoint = checkpoint;
      if (!eval_out.empty()) eval.out = eval_out;
      app::cmd_eval(eval, std::cout);
    } else if (*statefit_cmd) {
      if (!statefit_checkpoint.empty()) statefit.checkpoint = statefit_checkpoint;
      app::cmd_statefit(statefit, std::cout);
    } else if (*verify_cmd) {
      app::VerifyOptions opts;
      if (inject_fault) opts.inject_fault = srlc::grad::Op::kTanh;
      return app::cmd_verify(opts, std::cout);
    }
  } catch (const srlc::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kExitUsage;
  } catch (const srlc::TrainingAbort& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return app::kExitAbort;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return app::kExitAbort;
  }
  return app::kExitOk;
}
