#include "jumpy/behavior.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace jumpy {

void HParams::validate() const {
  if (L < 1) throw std::invalid_argument("horizon must be >= 1");
  if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("gamma must be in (0,1]");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda must be in [0,1]");
  if (jump_exec_prob < 0.0 || jump_exec_prob > 1.0)
    throw std::invalid_argument("jump_exec_prob must be in [0,1]");
}

ActorCritic::ActorCritic(int state_dim_, int hidden_, int n_actions_, uint64_t seed)
    : state_dim(state_dim_), hidden(hidden_), n_actions(n_actions_) {
  Rng rng(seed);
  actor = Mlp({state_dim_, hidden_, n_actions_}, rng);
  critic = Mlp({state_dim_, hidden_, 1}, rng);
}

NamedParams ActorCritic::actor_params() const {
  NamedParams np;
  actor.collect(np, "ac/actor");
  return np;
}

NamedParams ActorCritic::critic_params() const {
  NamedParams np;
  critic.collect(np, "ac/critic");
  return np;
}

CategoricalDist ActorCritic::policy(const Tensor& state) const {
  return CategoricalDist{actor(state), n_actions, unimix};
}

Tensor ActorCritic::value_raw(const Tensor& state) const { return critic(state); }

static Tensor stack_states(const std::vector<const ImaginedSlot*>& slots, int state_dim) {
  std::vector<double> data;
  data.reserve(slots.size() * static_cast<size_t>(state_dim));
  for (const auto* s : slots) {
    data.insert(data.end(), s->h.begin(), s->h.end());
    data.insert(data.end(), s->z.begin(), s->z.end());
  }
  return Tensor::constant({static_cast<int>(slots.size()), state_dim}, std::move(data));
}

std::vector<double> ActorCritic::values(const std::vector<const ImaginedSlot*>& slots) const {
  Tensor raw = value_raw(stack_states(slots, state_dim));
  std::vector<double> out(slots.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = symexp(raw.data()[i]);
  return out;
}

int ActorCritic::act_sample(const LatentState& s, Rng& rng) const {
  std::vector<double> st = s.h;
  st.insert(st.end(), s.z.begin(), s.z.end());
  CategoricalDist d = policy(Tensor::constant({1, state_dim}, std::move(st)));
  return sample_indices(d, rng)[0];
}

int ActorCritic::act_greedy(const LatentState& s) const {
  std::vector<double> st = s.h;
  st.insert(st.end(), s.z.begin(), s.z.end());
  CategoricalDist d = policy(Tensor::constant({1, state_dim}, std::move(st)));
  Tensor p = d.probs();
  int best = 0;
  for (int k = 1; k < n_actions; ++k)
    if (p.data()[k] > p.data()[best]) best = k;
  return best;
}

namespace {

struct RolloutRow {
  std::vector<double> h, z;
  int prev_action = 0;
};

// batched head pass over numeric latents; returns per-row (r, c, j_prob)
struct HeadVals {
  std::vector<double> r, c, j;
};

HeadVals run_heads(const WorldModel& wm, const Tensor& h, const Tensor& z) {
  auto heads = wm.predict_heads(h, z);
  const int B = h.dim(0);
  HeadVals out;
  out.r.resize(B);
  out.c.resize(B);
  out.j.resize(B);
  for (int b = 0; b < B; ++b) {
    out.r[b] = symexp(heads.r_raw.data()[b]);
    out.c[b] = 1.0 / (1.0 + std::exp(-heads.c_logit.data()[b]));
    out.j[b] = 1.0 / (1.0 + std::exp(-heads.j_logit.data()[b]));
  }
  return out;
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  const int B = static_cast<int>(rows.size());
  const int C = static_cast<int>(rows[0].size());
  std::vector<double> data;
  data.reserve(static_cast<size_t>(B) * C);
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return Tensor::constant({B, C}, std::move(data));
}

Tensor actions_onehot(const std::vector<int>& acts, int dim) {
  std::vector<double> data(acts.size() * static_cast<size_t>(dim), 0.0);
  for (size_t i = 0; i < acts.size(); ++i) data[i * dim + acts[i]] = 1.0;
  return Tensor::constant({static_cast<int>(acts.size()), dim}, std::move(data));
}

std::vector<int> sample_actions(const ActorCritic& ac, const Tensor& h, const Tensor& z, Rng& rng) {
  Tensor state = concat_cols(std::vector<Tensor>{h, z});
  return sample_indices(ac.policy(state), rng);
}

std::vector<std::vector<double>> split_rows(const Tensor& t) {
  const int B = t.dim(0), C = t.dim(1);
  std::vector<std::vector<double>> rows(B);
  for (int b = 0; b < B; ++b)
    rows[b].assign(t.data().begin() + static_cast<size_t>(b) * C,
                   t.data().begin() + static_cast<size_t>(b + 1) * C);
  return rows;
}

Tensor sample_prior_onehot(const WorldModel& wm, const Tensor& h, Rng& rng) {
  CategoricalDist pri = wm.dynamics_prior(h);
  std::vector<int> idx = sample_indices(pri, rng);
  std::vector<double> onehot(pri.logits.numel(), 0.0);
  for (size_t g = 0; g < idx.size(); ++g) onehot[g * pri.K + idx[g]] = 1.0;
  return Tensor::constant(pri.logits.shape(), std::move(onehot));
}

}  // namespace

std::vector<Trajectory> imagine_series(const WorldModel& wm, const ActorCritic& ac,
                                       const std::vector<LatentState>& starts, const HParams& hp,
                                       bool allow_jumps, Rng& rng) {
  hp.validate();
  const int S = static_cast<int>(starts.size());
  if (S == 0) return {};
  const WmDims& d = wm.dims;

  std::vector<Trajectory> trajs(S);
  std::vector<std::vector<double>> h_rows(S), z_rows(S);
  for (int i = 0; i < S; ++i) {
    h_rows[i] = starts[i].h;
    z_rows[i] = starts[i].z;
  }

  std::vector<int> prev_actions(S, 0);
  std::vector<int> prev_jbin(S, 0);

  for (int t = 0; t < hp.L; ++t) {
    Tensor h_prev = rows_tensor(h_rows);
    Tensor z_prev = rows_tensor(z_rows);

    std::vector<double> jump_mask(S, 0.0);
    if (t > 0) {
      for (int i = 0; i < S; ++i)
        if (prev_jbin[i] && allow_jumps)
          jump_mask[i] = rng.bernoulli(hp.jump_exec_prob) ? 1.0 : 0.0;
    }

    Tensor h_t, z_t;
    Tensor draw_raw, graw_raw;
    if (t == 0) {
      h_t = h_prev;
      z_t = z_prev;
    } else {
      Tensor h_short = wm.short_transition(h_prev, z_prev, actions_onehot(prev_actions, d.action_dim));
      Tensor h_long = wm.long_transition(h_prev, z_prev);
      h_t = row_select(jump_mask, h_long, h_short);
      z_t = sample_prior_onehot(wm, h_t, rng);
      auto [dr, gr] = wm.interval_raw(h_prev, z_prev, h_t, z_t);
      draw_raw = dr;
      graw_raw = gr;
    }

    HeadVals heads = run_heads(wm, h_t, z_t);
    std::vector<int> acts = sample_actions(ac, h_t, z_t, rng);

    auto h_out = split_rows(h_t);
    auto z_out = split_rows(z_t);
    for (int i = 0; i < S; ++i) {
      ImaginedSlot slot;
      slot.h = h_out[i];
      slot.z = z_out[i];
      slot.r = heads.r[i];
      slot.c = heads.c[i];
      slot.j_prob = heads.j[i];
      slot.j_bin = heads.j[i] > 0.5 ? 1 : 0;
      slot.jumped = t > 0 && jump_mask[i] == 1.0 ? 1 : 0;
      if (slot.jumped) {
        slot.action = -1;
        slot.delta = static_cast<double>(WorldModel::interval_steps(draw_raw.data()[i]));
        slot.G = symexp(graw_raw.data()[i]);
      } else {
        slot.action = acts[i];
        slot.delta = 1.0;
        slot.G = slot.r;
      }
      trajs[i].slots.push_back(std::move(slot));
      prev_jbin[i] = trajs[i].slots.back().j_bin;
      prev_actions[i] = acts[i];
    }
    h_rows = std::move(h_out);
    z_rows = std::move(z_out);
  }
  return trajs;
}

std::vector<Trajectory> imagine_parallel(const WorldModel& wm, const ActorCritic& ac,
                                         const std::vector<LatentState>& starts, const HParams& hp,
                                         bool allow_jumps, int depth_cap, Rng& rng) {
  hp.validate();
  const WmDims& d = wm.dims;

  struct Spawn {
    std::vector<double> h_pre, z_pre;
    int depth = 1;
  };

  std::vector<Trajectory> out;
  std::vector<Spawn> wave;

  // shared rollout: slot 0 comes from `init`, later slots are short-only;
  // armed+gated slots emit spawn requests
  auto roll = [&](std::vector<std::vector<double>> h_rows, std::vector<std::vector<double>> z_rows,
                  std::vector<ImaginedSlot> first_slots, int depth, std::vector<Spawn>& spawns) {
    const int S = static_cast<int>(h_rows.size());
    std::vector<Trajectory> trajs(S);
    for (int i = 0; i < S; ++i) {
      trajs[i].depth = depth;
      trajs[i].slots.push_back(std::move(first_slots[i]));
    }
    std::vector<int> prev_actions(S, 0);

    for (int t = 0; t < hp.L; ++t) {
      Tensor h_t, z_t;
      if (t == 0) {
        h_t = rows_tensor(h_rows);
        z_t = rows_tensor(z_rows);
      } else {
        Tensor h_prev = rows_tensor(h_rows);
        Tensor z_prev = rows_tensor(z_rows);
        h_t = wm.short_transition(h_prev, z_prev, actions_onehot(prev_actions, d.action_dim));
        z_t = sample_prior_onehot(wm, h_t, rng);
        HeadVals heads = run_heads(wm, h_t, z_t);
        auto h_out = split_rows(h_t);
        auto z_out = split_rows(z_t);
        for (int i = 0; i < S; ++i) {
          ImaginedSlot slot;
          slot.h = h_out[i];
          slot.z = z_out[i];
          slot.r = heads.r[i];
          slot.c = heads.c[i];
          slot.j_prob = heads.j[i];
          slot.j_bin = heads.j[i] > 0.5 ? 1 : 0;
          slot.jumped = 0;
          slot.delta = 1.0;
          slot.G = slot.r;
          trajs[i].slots.push_back(std::move(slot));
        }
        h_rows = std::move(h_out);
        z_rows = std::move(z_out);
      }

      // spawn checks on the just-recorded slot, then action draws
      for (int i = 0; i < S; ++i) {
        ImaginedSlot& slot = trajs[i].slots.back();
        if (slot.j_bin && allow_jumps && depth < depth_cap && rng.bernoulli(hp.jump_exec_prob))
          spawns.push_back(Spawn{h_rows[i], z_rows[i], depth + 1});
      }
      Tensor hs = rows_tensor(h_rows);
      Tensor zs = rows_tensor(z_rows);
      std::vector<int> acts = sample_actions(ac, hs, zs, rng);
      for (int i = 0; i < S; ++i) {
        if (trajs[i].slots.back().jumped == 0) trajs[i].slots.back().action = acts[i];
        prev_actions[i] = acts[i];
      }
    }
    // horizon L: trim to exactly L slots (slot 0 + L-1 rollout steps)
    for (auto& tr : trajs) tr.slots.resize(hp.L);
    return trajs;
  };

  // roots: slot 0 is the start state itself
  {
    const int S = static_cast<int>(starts.size());
    if (S == 0) return {};
    std::vector<std::vector<double>> h_rows(S), z_rows(S);
    std::vector<ImaginedSlot> first(S);
    Tensor h0 = rows_tensor([&] {
      std::vector<std::vector<double>> r(S);
      for (int i = 0; i < S; ++i) r[i] = starts[i].h;
      return r;
    }());
    Tensor z0 = rows_tensor([&] {
      std::vector<std::vector<double>> r(S);
      for (int i = 0; i < S; ++i) r[i] = starts[i].z;
      return r;
    }());
    HeadVals heads = run_heads(wm, h0, z0);
    for (int i = 0; i < S; ++i) {
      h_rows[i] = starts[i].h;
      z_rows[i] = starts[i].z;
      first[i].h = starts[i].h;
      first[i].z = starts[i].z;
      first[i].r = heads.r[i];
      first[i].c = heads.c[i];
      first[i].j_prob = heads.j[i];
      first[i].j_bin = heads.j[i] > 0.5 ? 1 : 0;
      first[i].delta = 1.0;
      first[i].G = first[i].r;
    }
    auto roots = roll(std::move(h_rows), std::move(z_rows), std::move(first), 0, wave);
    for (auto& tr : roots) out.push_back(std::move(tr));
  }

  // child waves
  while (!wave.empty()) {
    std::vector<Spawn> next;
    const int S = static_cast<int>(wave.size());
    std::vector<std::vector<double>> hp_rows(S), zp_rows(S);
    for (int i = 0; i < S; ++i) {
      hp_rows[i] = wave[i].h_pre;
      zp_rows[i] = wave[i].z_pre;
    }
    Tensor h_pre = rows_tensor(hp_rows);
    Tensor z_pre = rows_tensor(zp_rows);
    Tensor h_jump = wm.long_transition(h_pre, z_pre);
    Tensor z_jump = sample_prior_onehot(wm, h_jump, rng);
    auto [draw, graw] = wm.interval_raw(h_pre, z_pre, h_jump, z_jump);
    HeadVals heads = run_heads(wm, h_jump, z_jump);

    auto h_out = split_rows(h_jump);
    auto z_out = split_rows(z_jump);
    std::vector<ImaginedSlot> first(S);
    for (int i = 0; i < S; ++i) {
      first[i].h = h_out[i];
      first[i].z = z_out[i];
      first[i].r = heads.r[i];
      first[i].c = heads.c[i];
      first[i].j_prob = heads.j[i];
      first[i].j_bin = heads.j[i] > 0.5 ? 1 : 0;
      first[i].jumped = 1;
      first[i].action = -1;
      first[i].delta = static_cast<double>(WorldModel::interval_steps(draw.data()[i]));
      first[i].G = symexp(graw.data()[i]);
    }
    int depth = wave[0].depth;
    auto children = roll(std::move(h_out), std::move(z_out), std::move(first), depth, next);
    for (auto& tr : children) out.push_back(std::move(tr));
    wave = std::move(next);
  }
  return out;
}

std::vector<double> lambda_returns_arrays(const std::vector<double>& cont,
                                          const std::vector<double>& delta,
                                          const std::vector<double>& G,
                                          const std::vector<double>& values, double gamma,
                                          double lambda) {
  const int L = static_cast<int>(cont.size());
  std::vector<double> R(L, 0.0);
  R[L - 1] = values[L - 1];
  for (int t = L - 2; t >= 0; --t) {
    double boot = (1.0 - lambda) * values[t + 1] + lambda * R[t + 1];
    R[t] = cont[t] * (G[t + 1] + std::pow(gamma, delta[t + 1]) * boot);
  }
  return R;
}

std::vector<double> lambda_returns(const Trajectory& traj, const HParams& hp, const ActorCritic& ac) {
  std::vector<const ImaginedSlot*> slots;
  slots.reserve(traj.slots.size());
  for (const auto& s : traj.slots) slots.push_back(&s);
  std::vector<double> v = ac.values(slots);

  std::vector<double> cont(slots.size()), delta(slots.size()), G(slots.size());
  for (size_t i = 0; i < slots.size(); ++i) {
    cont[i] = slots[i]->c;
    delta[i] = slots[i]->delta;
    G[i] = slots[i]->G;
  }
  return lambda_returns_arrays(cont, delta, G, v, hp.gamma, hp.lambda);
}

Tensor critic_loss(const ActorCritic& ac, const std::vector<Trajectory>& trajs,
                   const std::vector<std::vector<double>>& returns) {
  std::vector<const ImaginedSlot*> slots;
  std::vector<double> targets;
  for (size_t i = 0; i < trajs.size(); ++i)
    for (size_t t = 0; t < trajs[i].slots.size(); ++t) {
      slots.push_back(&trajs[i].slots[t]);
      targets.push_back(symlog(returns[i][t]));
    }
  Tensor raw = ac.value_raw(stack_states(slots, ac.state_dim));
  Tensor per_row = half_sse_rows(raw, targets);
  return scale(sum_all(per_row), 1.0 / static_cast<double>(trajs.size()));
}

Tensor actor_loss(ActorCritic& ac, const std::vector<Trajectory>& trajs,
                  const std::vector<std::vector<double>>& returns) {
  // refresh the return-scale EMA with this batch's percentile range
  std::vector<double> all;
  for (const auto& r : returns) all.insert(all.end(), r.begin(), r.end());
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  const size_t n = sorted.size();
  auto percentile = [&](double q) {
    return sorted[static_cast<size_t>(std::llround(q * (n - 1)))];
  };
  double range = percentile(0.95) - percentile(0.05);
  ac.return_scale = ac.return_scale_decay * ac.return_scale + (1.0 - ac.return_scale_decay) * range;
  const double norm = std::max(1.0, ac.return_scale);

  // slots with actions drive the policy gradient; every slot contributes entropy
  std::vector<const ImaginedSlot*> act_slots, all_slots;
  std::vector<int> act_ids;
  std::vector<double> weights;
  for (size_t i = 0; i < trajs.size(); ++i) {
    std::vector<const ImaginedSlot*> traj_slots;
    for (const auto& s : trajs[i].slots) traj_slots.push_back(&s);
    std::vector<double> v = ac.values(traj_slots);
    for (size_t t = 0; t < trajs[i].slots.size(); ++t) {
      const ImaginedSlot& s = trajs[i].slots[t];
      all_slots.push_back(&s);
      if (s.action >= 0) {
        act_slots.push_back(&s);
        act_ids.push_back(s.action);
        double adv = (returns[i][t] - v[t]) / norm;
        weights.push_back((1.0 - s.jumped) * adv);
      }
    }
  }

  Tensor loss;
  bool have_pg = !act_slots.empty();
  if (have_pg) {
    Tensor probs = ac.policy(stack_states(act_slots, ac.state_dim)).probs();
    Tensor logp = log_op(pick_groups(probs, ac.n_actions, act_ids));
    Tensor w = Tensor::constant({static_cast<int>(weights.size()), 1}, weights);
    loss = scale(sum_all(mul(w, logp)), -1.0);
  }

  Tensor all_probs = ac.policy(stack_states(all_slots, ac.state_dim)).probs();
  Tensor ent = sum_all(entropy_groups(all_probs, ac.n_actions));
  Tensor ent_term = scale(ent, -ac.entropy_coef);
  loss = have_pg ? add(loss, ent_term) : ent_term;
  return scale(loss, 1.0 / static_cast<double>(trajs.size()));
}

ImagStats imag_stats(const std::vector<Trajectory>& trajs) {
  ImagStats st;
  st.n_traj = static_cast<int>(trajs.size());
  long jump_slots = 0;
  double delta_sum = 0.0;
  int jumping = 0;
  long jumps_in_jumping = 0;
  for (const auto& tr : trajs) {
    int jumps = 0;
    for (const auto& s : tr.slots)
      if (s.jumped) {
        ++jumps;
        ++jump_slots;
        delta_sum += s.delta;
      }
    if (jumps > 0) {
      ++jumping;
      jumps_in_jumping += jumps;
    }
  }
  if (st.n_traj > 0) st.jump_frequency = static_cast<double>(jumping) / st.n_traj;
  if (jump_slots > 0) st.mean_delta = delta_sum / jump_slots;
  if (jumping > 0) st.mean_jumps_per_jumping = static_cast<double>(jumps_in_jumping) / jumping;
  return st;
}

void dump_trajectories(const std::string& path, const std::vector<Trajectory>& trajs,
                       const std::vector<std::vector<double>>& returns) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("dump_trajectories: cannot open " + path);
  for (size_t i = 0; i < trajs.size(); ++i) {
    out << "{\"depth\":" << trajs[i].depth << ",\"slots\":[";
    for (size_t t = 0; t < trajs[i].slots.size(); ++t) {
      const auto& s = trajs[i].slots[t];
      if (t) out << ",";
      out << "{\"jumped\":" << s.jumped << ",\"j_bin\":" << s.j_bin << ",\"action\":" << s.action
          << ",\"delta\":" << s.delta << ",\"G\":" << s.G << ",\"r\":" << s.r << ",\"c\":" << s.c
          << ",\"R\":" << returns[i][t] << "}";
    }
    out << "]}\n";
  }
}

}  // namespace jumpy
