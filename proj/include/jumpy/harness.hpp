#pragma once

#include <string>

#include "jumpy/afford_approx.hpp"
#include "jumpy/behavior.hpp"
#include "jumpy/replay.hpp"

namespace jumpy {

enum class ImaginationMode { series, parallel };
enum class AffordSource { oracle, approx };

struct RunConfig {
  WorldConfig env;
  HParams hp;
  LossWeights weights;
  WmDims dims;

  double alpha = 1.0;
  double sigma_x = 128.0, sigma_y = 80.0;
  int train_ratio = 16;           // replayed steps per environment step
  long long total_env_steps = 100000;
  long long warmup_steps = 2000;  // random-policy collection before updates
  long long replay_capacity = 100000;
  uint64_t seed = 0;

  bool use_long_term = true;
  bool use_intrinsic = true;
  ImaginationMode imagination = ImaginationMode::series;
  AffordSource afford = AffordSource::oracle;
  std::string afford_model_path;
  int parallel_depth_cap = 2;

  int batch_b = 8, batch_t = 16;
  int imag_starts = 16;
  double wm_lr = 3e-4;    // desk-scale rates; paper-scale values load from config
  double ac_lr = 1e-4;
  double grad_clip = 100.0;
  double entropy_coef = 3e-4;
  long long checkpoint_every = 50000;

  std::string out_dir = "out/run";
  bool write_episode_log = false;

  static RunConfig from_kv(const KvConfig& kv);
  void apply_kv(const KvConfig& kv);
  void validate() const;
  std::string echo() const;  // flat key=value dump of the effective config
};

struct TrainResult {
  long long env_steps = 0;
  int episodes = 0;
  double final_success_rate = 0.0;   // last-quartile episode success
  double early_success_rate = 0.0;   // first-quartile episode success
  double mean_jumps_per_jumping = 0.0;
  double wm_loss_first_quartile = 0.0;
  double wm_loss_last_quartile = 0.0;
  std::string checkpoint_path;
  std::string metrics_path;
};

TrainResult train(const RunConfig& cfg);

struct EvalResult {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_steps_to_success = 0.0;
  std::string report_path;
};

EvalResult evaluate(const std::string& checkpoint_path, const RunConfig& cfg, int n_episodes,
                    uint64_t eval_seed);

struct AblateArmResult {
  std::string arm;
  uint64_t seed = 0;
  TrainResult result;
};

struct AblateResult {
  std::vector<AblateArmResult> arms;
  std::string summary_path;
};

// four arms sharing seeds: full, no-long-term, no-intrinsic, parallel
AblateResult ablate(const RunConfig& base, int n_seeds);

// render an observation and its affordance map side by side to image files
void inspect(const RunConfig& cfg, uint64_t episode_seed, const std::string& out_dir);

}  // namespace jumpy
