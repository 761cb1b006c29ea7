#pragma once

#include <vector>

#include "jumpy/world_model.hpp"

namespace jumpy {

struct HParams {
  int L = 15;                    // imagination horizon
  double gamma = 0.997;
  double lambda = 0.95;
  double jump_exec_prob = 0.7;   // chance an armed jump flag actually jumps

  void validate() const;
};

// One imagination slot. Jump slots carry no action; their interval fields
// come from the interval predictor, short slots have delta=1 and G=r.
struct ImaginedSlot {
  std::vector<double> h, z;
  int action = -1;
  double r = 0.0, c = 1.0, j_prob = 0.0;
  int j_bin = 0;
  int jumped = 0;
  double delta = 1.0, G = 0.0;
};

struct Trajectory {
  std::vector<ImaginedSlot> slots;
  int depth = 0;  // 0 = root; parallel children nest deeper
};

class ActorCritic {
 public:
  int state_dim = 0, hidden = 256, n_actions = 5;
  Mlp actor, critic;
  double entropy_coef = 3e-4;
  double unimix = 0.01;
  double return_scale = 0.0;        // S, percentile-range EMA
  double return_scale_decay = 0.99;

  ActorCritic() = default;
  ActorCritic(int state_dim, int hidden, int n_actions, uint64_t seed);

  NamedParams actor_params() const;
  NamedParams critic_params() const;

  CategoricalDist policy(const Tensor& state) const;  // [B, n_actions]
  Tensor value_raw(const Tensor& state) const;        // [B,1], symlog space
  std::vector<double> values(const std::vector<const ImaginedSlot*>& slots) const;
  int act_sample(const LatentState& s, Rng& rng) const;
  int act_greedy(const LatentState& s) const;
};

// Per slot, RNG draws happen in this order: jump gates (rows with the
// previous slot's flag armed), then prior z samples, then action samples.
std::vector<Trajectory> imagine_series(const WorldModel& wm, const ActorCritic& ac,
                                       const std::vector<LatentState>& starts, const HParams& hp,
                                       bool allow_jumps, Rng& rng);

// Roots roll short-only; each armed+gated slot spawns an independent child
// starting at the post-jump state with a fresh horizon. No value or gradient
// crosses trajectory boundaries.
std::vector<Trajectory> imagine_parallel(const WorldModel& wm, const ActorCritic& ac,
                                         const std::vector<LatentState>& starts, const HParams& hp,
                                         bool allow_jumps, int depth_cap, Rng& rng);

// Interval-aware bootstrapped lambda-returns, computed by backward recursion.
std::vector<double> lambda_returns(const Trajectory& traj, const HParams& hp, const ActorCritic& ac);
std::vector<double> lambda_returns_arrays(const std::vector<double>& cont,
                                          const std::vector<double>& delta,
                                          const std::vector<double>& G,
                                          const std::vector<double>& values, double gamma,
                                          double lambda);

Tensor critic_loss(const ActorCritic& ac, const std::vector<Trajectory>& trajs,
                   const std::vector<std::vector<double>>& returns);

// Policy-gradient with jump masking and normalized advantages, plus an
// entropy bonus. Updates ac.return_scale with the batch percentile range.
Tensor actor_loss(ActorCritic& ac, const std::vector<Trajectory>& trajs,
                  const std::vector<std::vector<double>>& returns);

struct ImagStats {
  double jump_frequency = 0.0;          // fraction of trajectories with >=1 jump
  double mean_delta = 0.0;              // mean interval over jump slots
  double mean_jumps_per_jumping = 0.0;  // mean jump count among jumping trajectories
  int n_traj = 0;
};
ImagStats imag_stats(const std::vector<Trajectory>& trajs);

// line-delimited structured dump for post-hoc diagnostics
void dump_trajectories(const std::string& path, const std::vector<Trajectory>& trajs,
                       const std::vector<std::vector<double>>& returns);

}  // namespace jumpy
