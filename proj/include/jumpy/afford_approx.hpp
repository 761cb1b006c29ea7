#pragma once

#include <string>
#include <vector>

#include "jumpy/affordance.hpp"
#include "jumpy/env.hpp"
#include "jumpy/nn.hpp"

namespace jumpy {

struct AnnotatedSample {
  Image obs;
  Instruction instruction;
  int task_id = 0;
  AffordanceMap map;
};

// Dense regressor from (downsampled observation, task embedding) to a coarse
// map, upsampled bilinearly to the observation size after a softplus.
class ApproxModel {
 public:
  static constexpr int kObsDs = 16;
  static constexpr int kMapDs = 16;
  static constexpr int kEmbDim = 8;
  static constexpr int kHidden = 128;

  int n_tasks = 1;
  Tensor task_emb;  // [n_tasks, kEmbDim]
  Mlp net;          // [obs + emb] -> map logits

  ApproxModel() = default;
  ApproxModel(int n_tasks, uint64_t seed);

  NamedParams named_params() const;
  std::vector<Tensor> param_list() const;
  int64_t param_count() const;

  Tensor forward(const Tensor& obs_batch, const std::vector<int>& task_ids, int out_side) const;
  AffordanceMap predict(const Image& obs, int task_id) const;

  void save(const std::string& path) const;           // "LSIA" flat format
  static ApproxModel load(const std::string& path);
};

AffordanceMap predict_map(const ApproxModel& model, const Image& obs, const Instruction& instr);

// Random-policy collection annotated with the exact oracle.
std::vector<AnnotatedSample> annotate_dataset(const WorldConfig& cfg, const Instruction& instr, int n,
                                              uint64_t seed);

struct TrainApproxResult {
  ApproxModel model;
  double train_loss = 0.0;
  double holdout_loss = 0.0;
  std::vector<double> train_curve;
};

// MSE regression against oracle maps; every 10th sample is held out.
TrainApproxResult train_approximator(const std::vector<AnnotatedSample>& data, int epochs, double lr,
                                     uint64_t seed);
double approx_mse(const ApproxModel& model, const std::vector<AnnotatedSample>& data,
                  const std::vector<size_t>& idx);

// dataset container (observations stay float32 full-res)
void save_dataset(const std::string& path, const std::vector<AnnotatedSample>& data);
std::vector<AnnotatedSample> load_dataset(const std::string& path);

}  // namespace jumpy
