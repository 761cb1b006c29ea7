#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpy/config.hpp"
#include "jumpy/image.hpp"

namespace jumpy {

struct WorldConfig {
  int world_size = 16;      // cells per side
  int view_radius = 3;      // cells visible around the agent
  int obs_size = 64;        // rendered pixels per side
  std::string target_class = "red";
  int n_targets = 1;
  int max_steps = 1000;     // episode cap
  uint64_t seed = 0;

  void validate() const;
  static WorldConfig from_kv(const KvConfig& kv, const std::string& prefix = "");
};

enum class Action { TurnLeft = 0, TurnRight = 1, Forward = 2, Interact = 3, NoOp = 4 };
constexpr int kNumActions = 5;

struct Target {
  int x = 0, y = 0;
  std::string cls;
  int size = 1;
};

// Heading: 0=N, 1=E, 2=S, 3=W. N decreases y.
struct WorldState {
  WorldConfig cfg;
  int agent_x = 0, agent_y = 0;
  int heading = 0;
  std::vector<Target> targets;
  int step_count = 0;
  bool done = false;
  uint64_t noise_seed = 0;
};

using Observation = Image;  // obs_size x obs_size x 3, values in [0,1]

struct StepResult {
  Observation obs;
  double r_env = 0.0;
  int cont = 1;
};

struct PlacementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::pair<WorldState, Observation> reset(const WorldConfig& cfg, uint64_t episode_seed);
std::pair<WorldState, StepResult> step(const WorldState& state, Action action);
Observation render(const WorldState& state);

// FNV-1a over the raw pixel bytes; golden-snapshot helper.
uint64_t pixel_checksum(const Observation& obs);

}  // namespace jumpy
