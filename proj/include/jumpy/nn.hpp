#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jumpy/rng.hpp"
#include "jumpy/tensor.hpp"

namespace jumpy {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
  Tensor W, b;
  Linear() = default;
  Linear(int in, int out, Rng& rng);
  Tensor operator()(const Tensor& x) const { return dense(x, W, b); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

// tanh MLP; final layer linear
struct Mlp {
  std::vector<Linear> layers;
  Mlp() = default;
  Mlp(const std::vector<int>& dims, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct GruCell {
  Linear xg, hg;  // input/recurrent projections for the r,u gates (2H)
  Linear xc, hc;  // candidate projections (H)
  int hidden = 0;
  GruCell() = default;
  GruCell(int in, int hidden, Rng& rng);
  Tensor operator()(const Tensor& h, const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

// N independent K-way categoricals per sample, flattened row-major.
// `unimix` blends a uniform floor into the probabilities.
struct CategoricalDist {
  Tensor logits;  // [..., N*K]
  int K = 0;
  double unimix = 0.0;

  int64_t groups() const { return logits.numel() / K; }
  Tensor probs() const;
};

// Forward: one-hot sample per group. Backward: gradients flow as if the
// output were the (mixed) probabilities.
Tensor sample_straight_through(const CategoricalDist& dist, Rng& rng);
std::vector<int> sample_indices(const CategoricalDist& dist, Rng& rng);
Tensor greedy_onehot(const CategoricalDist& dist);

// sum over all groups of KL(p || q); 0*ln0 := 0
Tensor kl_categorical(const CategoricalDist& p, const CategoricalDist& q);

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 100.0;
  long long t = 0;
  std::vector<Tensor> params;
  std::vector<std::vector<double>> m, v;

  Adam() = default;
  Adam(std::vector<Tensor> params_, double lr_, double clip_norm_ = 100.0);
  void zero_grad();
  // applies one update from the accumulated grads; throws on non-finite grads
  void step();
  // raw single-tensor update, exposed for tests
  static void update_one(std::vector<double>& value, const std::vector<double>& grad,
                         std::vector<double>& m, std::vector<double>& v, long long t, double lr,
                         double beta1, double beta2, double eps, double scale);
};

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Central finite differences against the reverse-mode gradient on the frozen
// surrogate (samples and stop_gradient values pinned to the base evaluation).
// Returns the max relative error over all checked coordinates.
double grad_check(const std::function<Tensor()>& f, std::span<const Tensor> params, double eps = 1e-4,
                  int max_coords_per_param = -1, uint64_t subsample_seed = 0);

// "LSNN" checkpoint: named sections of float32 tensors.
void save_checkpoint(const std::string& path, const NamedParams& sections,
                     const std::map<std::string, std::vector<double>>& extras = {});
struct Checkpoint {
  std::map<std::string, std::pair<std::vector<int>, std::vector<double>>> sections;
  bool has(const std::string& name) const { return sections.count(name) > 0; }
};
Checkpoint load_checkpoint(const std::string& path);
// copies matching sections into the given tensors; throws on missing/mismatch
void restore_params(const Checkpoint& ck, const NamedParams& sections);

}  // namespace jumpy
