#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>

#include "jumpy/affordance.hpp"
#include "jumpy/behavior.hpp"
#include "jumpy/env.hpp"
#include "jumpy/world_model.hpp"

namespace jumpy {

// Per-step replay record. Observations and maps are stored downsampled to the
// world model's input resolution; diagnostics keep the reward pieces.
struct ShortTuple {
  std::vector<float> obs_ds, map_ds;
  int action = 0;
  double reward = 0.0;  // composite
  double cont = 1.0;
  double jump = 0.0;
  double delta = 1.0;   // always 1 for short steps
  double G = 0.0;       // always == reward for short steps
  // diagnostics
  double r_env = 0.0, r_clip = 0.0, r_intr = 0.0, p_jump = 0.0;
};

// Simulated post-jump record; pending until the intrinsic-reward stopping
// rule fires, discarded if the episode ends first.
struct LongTuple {
  std::vector<float> obs_ds, map_ds;
  double reward = 0.0;
  double cont = 1.0;  // simulated states never terminate
  double jump = 0.0;
  int action = 0;     // recorded like short tuples; the losses do not use it
  double r_intr_sim = 0.0;  // stopping threshold
  int anchor_index = -1;
  double delta = 0.0;
  double G = 0.0;
  bool finalized = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(long long capacity_steps) : capacity_(capacity_steps) {}

  void begin_episode();
  // records a step; when short.jump is set, make_candidate() supplies the
  // pending long tuple anchored at this step
  void record_step(const ShortTuple& short_tuple,
                   const std::function<LongTuple()>& make_candidate = nullptr);
  // first-hit stopping rule: a new real step whose intrinsic reward reaches a
  // pending tuple's simulated value finalizes it; returns the tuples
  // finalized by this step
  std::vector<LongTuple> finalize_pending(double r_intr_new, double gamma);
  void end_episode();

  std::optional<SeqBatch> sample_batch(int B, int T, Rng& rng) const;

  long long total_steps() const { return total_steps_; }
  long long jump_step_count() const { return jump_steps_; }
  long long pending_count() const;
  long long finalized_count() const { return finalized_; }
  long long discarded_count() const { return discarded_; }

  struct Episode {
    std::vector<ShortTuple> steps;
    std::vector<LongTuple> longs;     // finalized
    std::vector<LongTuple> pending;
    bool open = true;
  };
  const std::deque<Episode>& episodes() const { return episodes_; }

 private:
  long long capacity_;
  std::deque<Episode> episodes_;
  long long total_steps_ = 0;
  long long jump_steps_ = 0;
  long long finalized_ = 0;
  long long discarded_ = 0;
  void evict();
};

// Builds a pending long tuple from the anchor observation: crop the best
// affordance window, recompute map and rewards on the simulated view, and run
// the frozen model/policy for the post-jump action and jump flag.
LongTuple make_long_candidate(const Image& obs, const AffordanceMap& map, const LatentState& anchor,
                              const WorldModel& wm, const ActorCritic& ac,
                              const std::function<AffordanceMap(const Image&)>& afford_fn,
                              const Instruction& instr, const GaussianMatrix& gauss, double alpha,
                              Rng& rng);

// helpers shared with the harness
std::vector<float> downsample_f32(const Image& img, int side);
std::vector<float> downsample_map_f32(const AffordanceMap& map, int side);

// append-only framed episode log
class EpisodeLogWriter {
 public:
  explicit EpisodeLogWriter(const std::string& path);
  ~EpisodeLogWriter();
  void step(const ShortTuple& t);
  void long_finalized(const LongTuple& t);
  void episode_end();

 private:
  FILE* f_ = nullptr;
};

struct LogRecord {
  int type = 0;  // 1=step, 2=long, 3=episode end
  double reward = 0, r_env = 0, r_clip = 0, r_intr = 0, p_jump = 0, delta = 0, G = 0;
  int action = 0, jump = 0;
};
std::vector<LogRecord> read_episode_log(const std::string& path);

}  // namespace jumpy
