#pragma once

#include <utility>
#include <vector>

#include "jumpy/nn.hpp"

namespace jumpy {

struct WmDims {
  int h = 128;           // deterministic recurrent state
  int z_rows = 8;        // independent categorical latents
  int z_cols = 8;        // classes per latent
  int hidden = 256;      // MLP width
  int obs_ds = 16;       // encoder/decoder downsample side
  int action_dim = 5;
  double unimix = 0.01;  // uniform floor on categorical probabilities

  int z_flat() const { return z_rows * z_cols; }
  int obs_dim() const { return obs_ds * obs_ds * 3; }
  int map_dim() const { return obs_ds * obs_ds; }
  int state_dim() const { return h + z_flat(); }
};

struct LossWeights {
  double dyn = 1.0;
  double rep = 0.1;   // encoder-side KL weight
  double pred = 1.0;
  double long_ = 1.0;
};

// numeric latent snapshot (h, one-hot z)
struct LatentState {
  std::vector<double> h, z;
};

// B sequences of T consecutive steps plus the finalized jump records anchored
// inside them. Row-major [b][t]; short rows may be padded at the tail (valid=0).
struct SeqBatch {
  int B = 0, T = 0;
  std::vector<double> obs;     // B*T*obs_dim
  std::vector<double> map;     // B*T*map_dim
  std::vector<int> action;     // B*T
  std::vector<double> reward;  // B*T composite reward
  std::vector<double> cont;    // B*T
  std::vector<double> jump;    // B*T
  std::vector<uint8_t> valid;  // B*T

  struct LongItem {
    int row = 0, offset = 0;  // anchor position within the batch
    std::vector<double> obs, map;  // simulated o', M' (downsampled)
    double reward = 0, cont = 1, jump = 0;
    double delta = 1, G = 0;
  };
  std::vector<LongItem> longs;
};

struct WmLossBreakdown {
  // per-branch sums over time, averaged over batch rows, unweighted
  double dyn = 0, enc = 0, dec = 0, pred = 0;
  double ldyn = 0, lenc = 0, ldec = 0, lpred = 0, lint = 0;
  double total = 0;
  int long_count = 0;
  // per valid step, t-major then row order; raw KL and the free-bits term
  std::vector<double> kl_dyn_raw, kl_dyn_term, kl_enc_raw, kl_enc_term;
};

class WorldModel {
 public:
  WmDims dims;
  GruCell short_gru;  // f(h, [z, a])
  GruCell long_gru;   // f(h, [z]); action-free by construction
  Mlp encoder;        // [h, obs, map] -> z logits
  Mlp prior;          // h -> z logits
  Mlp decoder;        // [h, z] -> [obs_dim + map_dim]
  Mlp rc_head;        // [h, z] -> [r_raw, c_logit]
  Mlp jump_head;      // [h, z] -> j_logit
  Mlp interval_head;  // [h_pre, z_pre, h_jump, z_jump] -> [delta_raw, G_raw]

  WorldModel(const WmDims& dims, uint64_t seed);

  NamedParams named_params() const;
  std::vector<Tensor> param_list() const;
  NamedParams encoder_params() const;
  NamedParams prior_params() const;

  Tensor short_transition(const Tensor& h, const Tensor& z, const Tensor& action_onehot) const;
  Tensor long_transition(const Tensor& h, const Tensor& z) const;
  CategoricalDist encode(const Tensor& h, const Tensor& obs_ds, const Tensor& map_ds) const;
  CategoricalDist dynamics_prior(const Tensor& h) const;

  struct HeadsOut {
    Tensor r_raw, c_logit, j_logit;  // [B,1] each; decode r via symexp
  };
  HeadsOut predict_heads(const Tensor& h, const Tensor& z) const;
  std::pair<Tensor, Tensor> decode(const Tensor& h, const Tensor& z) const;
  // raw interval outputs; delta decodes via max(1, round(symexp)), G via symexp
  std::pair<Tensor, Tensor> interval_raw(const Tensor& h_pre, const Tensor& z_pre,
                                         const Tensor& h_jump, const Tensor& z_jump) const;
  static long interval_steps(double delta_raw);
};

struct ShortUnroll {
  Tensor loss;                        // weighted short-branch scalar
  std::vector<Tensor> h, z;           // posterior latents per step, [B,h]/[B,z_flat]
  WmLossBreakdown bd;                 // short fields only
};

ShortUnroll loss_short(const WorldModel& wm, const SeqBatch& batch, const LossWeights& w, Rng& rng);

// pre-jump latents paired with stored jump records
struct LongPair {
  Tensor h_pre, z_pre;  // [1,*]
  const SeqBatch::LongItem* item;
};
std::pair<Tensor, WmLossBreakdown> loss_long(const WorldModel& wm, std::span<const LongPair> pairs,
                                             const LossWeights& w, int batch_rows, Rng& rng);

std::pair<Tensor, WmLossBreakdown> total_loss(const WorldModel& wm, const SeqBatch& batch,
                                              const LossWeights& w, Rng& rng,
                                              ShortUnroll* unroll_out = nullptr);

}  // namespace jumpy
