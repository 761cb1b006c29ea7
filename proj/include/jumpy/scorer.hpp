#pragma once

#include <deque>
#include <string>
#include <vector>

#include "jumpy/image.hpp"

namespace jumpy {

struct Instruction {
  std::string task_id;
  std::string target_class = "red";
};

// Ordered set of exactly 16 frames simulating an approach toward a region.
struct Clip {
  static constexpr int kFrames = 16;
  std::vector<Image> frames;

  void validate() const;
};

// area(f)^0.5 * center(f): area = fraction of pixels matching the target color,
// center = Gaussian falloff of the match centroid from the image center.
double frame_targetness(const Image& obs, const Instruction& instr);

// Mean targetness of the arrival half (frames 8..15).
double score_clip(const Clip& clip, const Instruction& instr);

// Score of the last-16 window of a frame history; short histories are padded
// by repeating the oldest frame.
double clip_reward(const std::deque<Image>& history, const Instruction& instr);

// Same sliding-window score fed from per-frame targetness values that the
// caller has already computed (exactly equivalent, avoids rescoring frames).
double clip_reward_from_scores(const std::deque<double>& history_scores);

}  // namespace jumpy
