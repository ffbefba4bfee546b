#include <cstdint>
#include <string>

#include <CLI11.hpp>

#include "surgirl/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"SurgIRL: knowledge-grounded RL on desk-scale surgical-analog tasks"};
  app.require_subcommand(1);

  std::string train_config;
  CLI::App* train = app.add_subcommand("train", "train a single task from a config file");
  train->add_option("config", train_config, "run config path")->required();

  std::string eval_ckpt, eval_task, eval_csv;
  int eval_episodes = 20;
  std::uint64_t eval_seed = 0;
  CLI::App* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval->add_option("ckpt", eval_ckpt, "checkpoint path")->required();
  eval->add_option("task", eval_task, "task name")->required();
  eval->add_option("--episodes", eval_episodes, "number of evaluation episodes");
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--csv", eval_csv, "per-episode results CSV path");

  std::string group_config;
  CLI::App* transfer = app.add_subcommand("transfer", "run an incremental task group");
  transfer->add_option("config", group_config, "group config path")->required();

  std::string inspect_ckpt;
  CLI::App* inspect = app.add_subcommand("inspect", "print a checkpoint manifest");
  inspect->add_option("ckpt", inspect_ckpt, "checkpoint path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return surgirl::kExitValidation;
  }

  if (train->parsed()) return surgirl::cli_train(train_config);
  if (eval->parsed()) {
    return surgirl::cli_eval(eval_ckpt, eval_task, eval_episodes, eval_seed, eval_csv);
  }
  if (transfer->parsed()) return surgirl::cli_transfer(group_config);
  if (inspect->parsed()) return surgirl::cli_inspect(inspect_ckpt);
  return surgirl::kExitValidation;
}
