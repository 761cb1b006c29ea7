#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "jumpy/image.hpp"
#include "jumpy/scorer.hpp"

namespace jumpy {

// Per-pixel task-relevance scores aligned with an observation.
struct AffordanceMap {
  int w = 0, h = 0;
  std::vector<double> v;

  AffordanceMap() = default;
  AffordanceMap(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.0) {}
  double& at(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
};

struct GaussianMatrix {
  int w = 0, h = 0;
  double sigma_x = 0.0, sigma_y = 0.0;
  std::vector<double> v;
  double at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
};

struct JumpStats {
  double k_r = 0.0;   // relative kurtosis
  double k_a = 0.0;   // absolute kurtosis (max - mean)
  double p_jump = 0.0;
};

// Running mean + population std over every jump probability seen since
// training start; never reset mid-run.
class ThresholdTracker {
 public:
  void update(double p_jump);
  std::optional<double> threshold() const;  // nullopt until 2 updates
  bool jump_flag(double p_jump) const;      // strict '>' against the threshold
  long long count() const { return count_; }
  double mean() const { return mean_; }
  double m2() const { return m2_; }
  void restore(long long count, double mean, double m2);

 private:
  long long count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// 9x9 sliding windows sized to 15% of each dimension, corners evenly spaced
// from 0 to dim - win, row-major.
std::vector<WindowRect> window_grid(int obs_w, int obs_h);
constexpr int kWindowsPerAxis = 9;
constexpr int kWindowCount = kWindowsPerAxis * kWindowsPerAxis;

// Continuous crop rectangle of zoom frame k (0..15) toward `window`: extents
// shrink geometrically from the full image to the window, centers move
// linearly from the image center to the window center (clamped inside).
Rect zoom_rect(int obs_w, int obs_h, const WindowRect& window, int k);

// 16 crops resized back to the observation size.
Clip zoom_sequence(const Image& obs, const WindowRect& window);

using ClipScorer = std::function<double(const Clip&)>;

// Straightforward serial implementation: build every zoom clip, score it,
// average overlapping windows per pixel. Kept as the reference the fused
// kernel is tested and benchmarked against.
AffordanceMap compute_affordance_map_reference(const Image& obs, const ClipScorer& scorer);

// Fused analytic-scorer path, OpenMP-parallel across windows. Matches the
// reference with score_clip(.., instr) to within 1e-9.
AffordanceMap compute_affordance_map(const Image& obs, const Instruction& instr);

// Per-window clip scores of the fused path (row-major window order).
std::vector<double> window_relevance_scores(const Image& obs, const Instruction& instr);

GaussianMatrix gaussian_matrix(int w, int h, double sigma_x, double sigma_y);

double intrinsic_reward(const AffordanceMap& map, const GaussianMatrix& gauss);

double composite_reward(double r_env, double r_clip, double r_intr, double alpha);

JumpStats jump_stats(const AffordanceMap& map);

// Window with the highest mean map value (ties -> smallest row-major index).
int best_window_by_map_mean(const AffordanceMap& map);

}  // namespace jumpy
