// Command-line front end: annotate, train-approx, train, eval, ablate, inspect.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "jumpy/harness.hpp"

using namespace jumpy;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  long long steps = -1;
  std::string mode;
  std::string afford;
  bool no_long_term = false;
  bool no_intrinsic = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "key=value config file");
  cmd->add_option("--seed", o.seed, "master seed override");
  cmd->add_option("--out", o.out_dir, "output directory override");
  cmd->add_option("--mode", o.mode, "imagination mode: series|parallel")
      ->check(CLI::IsMember({"series", "parallel"}));
  cmd->add_flag("--no-long-term", o.no_long_term, "disable the long-term branch");
  cmd->add_flag("--no-intrinsic", o.no_intrinsic, "drop the intrinsic reward from the composite");
  cmd->add_option("--afford", o.afford, "affordance source: oracle|approx")
      ->check(CLI::IsMember({"oracle", "approx"}));
  cmd->add_option("--steps", o.steps, "total environment steps override");
}

RunConfig build_config(const CommonOpts& o) {
  RunConfig cfg;
  if (!o.config_path.empty()) cfg.apply_kv(KvConfig::from_file(o.config_path));
  if (o.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(o.seed);
    cfg.env.seed = static_cast<uint64_t>(o.seed);
  }
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  if (o.steps >= 0) cfg.total_env_steps = o.steps;
  if (o.mode == "series") cfg.imagination = ImaginationMode::series;
  if (o.mode == "parallel") cfg.imagination = ImaginationMode::parallel;
  if (o.afford == "oracle") cfg.afford = AffordSource::oracle;
  if (o.afford == "approx") cfg.afford = AffordSource::approx;
  if (o.no_long_term) cfg.use_long_term = false;
  if (o.no_intrinsic) cfg.use_intrinsic = false;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"jumpy: world-model RL agent with jumpy imagination on a pixel gridworld"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* annotate_cmd = app.add_subcommand("annotate", "collect oracle-annotated affordance data");
  int annotate_n = 256;
  add_common(annotate_cmd, opts);
  annotate_cmd->add_option("--n", annotate_n, "number of samples");

  auto* train_approx_cmd = app.add_subcommand("train-approx", "fit the fast map approximator");
  std::string data_path;
  int approx_epochs = 50;
  double approx_lr = 1e-3;
  add_common(train_approx_cmd, opts);
  train_approx_cmd->add_option("--data", data_path, "dataset path from annotate")->required();
  train_approx_cmd->add_option("--epochs", approx_epochs, "training epochs");
  train_approx_cmd->add_option("--lr", approx_lr, "learning rate");

  auto* train_cmd = app.add_subcommand("train", "run the full training loop");
  add_common(train_cmd, opts);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with the greedy policy");
  std::string checkpoint_path;
  int eval_episodes = 20;
  add_common(eval_cmd, opts);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "LSNN checkpoint path")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "number of evaluation episodes");

  auto* ablate_cmd = app.add_subcommand("ablate", "run the four-arm comparison on shared seeds");
  int ablate_seeds = 5;
  add_common(ablate_cmd, opts);
  ablate_cmd->add_option("--seeds", ablate_seeds, "seeds per arm");

  auto* inspect_cmd = app.add_subcommand("inspect", "dump an observation and its affordance map");
  long long inspect_episode = 0;
  add_common(inspect_cmd, opts);
  inspect_cmd->add_option("--episode", inspect_episode, "episode seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (annotate_cmd->parsed()) {
      RunConfig cfg = build_config(opts);
      std::filesystem::create_directories(cfg.out_dir);
      Instruction instr{"navigate", cfg.env.target_class};
      auto data = annotate_dataset(cfg.env, instr, annotate_n, cfg.seed);
      std::string path = cfg.out_dir + "/afford_dataset.lsds";
      save_dataset(path, data);
      // first pair dumped for visual inspection
      write_ppm(data[0].obs, cfg.out_dir + "/sample0_obs.ppm");
      write_pgm(data[0].map.v, data[0].map.w, data[0].map.h, cfg.out_dir + "/sample0_map.pgm");
      std::printf("annotate: wrote %zu samples to %s\n", data.size(), path.c_str());
    } else if (train_approx_cmd->parsed()) {
      RunConfig cfg = build_config(opts);
      std::filesystem::create_directories(cfg.out_dir);
      auto data = load_dataset(data_path);
      TrainApproxResult r = train_approximator(data, approx_epochs, approx_lr, cfg.seed);
      std::string path = cfg.out_dir + "/afford_approx.lsia";
      r.model.save(path);
      std::printf("train-approx: train mse %.6g holdout mse %.6g -> %s\n", r.train_loss,
                  r.holdout_loss, path.c_str());
    } else if (train_cmd->parsed()) {
      RunConfig cfg = build_config(opts);
      TrainResult r = train(cfg);
      std::printf("train: %lld env steps, %d episodes, final success %.3f (early %.3f)\n",
                  r.env_steps, r.episodes, r.final_success_rate, r.early_success_rate);
      std::printf("train: metrics at %s\n", r.metrics_path.c_str());
    } else if (eval_cmd->parsed()) {
      RunConfig cfg = build_config(opts);
      uint64_t eseed = opts.seed >= 0 ? static_cast<uint64_t>(opts.seed) : 1;
      EvalResult r = evaluate(checkpoint_path, cfg, eval_episodes, eseed);
      std::printf("eval: success rate %.3f over %d episodes, mean steps-to-success %.1f\n",
                  r.success_rate, r.episodes, r.mean_steps_to_success);
    } else if (ablate_cmd->parsed()) {
      RunConfig cfg = build_config(opts);
      AblateResult r = ablate(cfg, ablate_seeds);
      std::printf("ablate: summary at %s\n", r.summary_path.c_str());
    } else if (inspect_cmd->parsed()) {
      RunConfig cfg = build_config(opts);
      inspect(cfg, static_cast<uint64_t>(inspect_episode), cfg.out_dir);
      std::printf("inspect: wrote images to %s\n", cfg.out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
