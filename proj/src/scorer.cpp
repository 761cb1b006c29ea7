#include "jumpy/scorer.hpp"

#include <cmath>
#include <stdexcept>

#include "jumpy/palette.hpp"

namespace jumpy {

void Clip::validate() const {
  if (static_cast<int>(frames.size()) != kFrames) throw std::invalid_argument("clip must hold 16 frames");
  for (const auto& f : frames)
    if (f.w != frames[0].w || f.h != frames[0].h || f.c != 3)
      throw std::invalid_argument("clip frames must share dimensions");
}

double frame_targetness(const Image& obs, const Instruction& instr) {
  const auto col = target_color(instr.target_class);
  long count = 0;
  double sum_x = 0.0, sum_y = 0.0;
  for (int y = 0; y < obs.h; ++y)
    for (int x = 0; x < obs.w; ++x) {
      double dr = std::abs(obs.at(x, y, 0) - col[0]);
      double dg = std::abs(obs.at(x, y, 1) - col[1]);
      double db = std::abs(obs.at(x, y, 2) - col[2]);
      if (dr <= kColorTolerance && dg <= kColorTolerance && db <= kColorTolerance) {
        ++count;
        sum_x += x;
        sum_y += y;
      }
    }
  if (count == 0) return 0.0;
  double area = static_cast<double>(count) / (static_cast<double>(obs.w) * obs.h);
  double cx = sum_x / count, cy = sum_y / count;
  double mx = (obs.w - 1) * 0.5, my = (obs.h - 1) * 0.5;
  double d2 = (cx - mx) * (cx - mx) + (cy - my) * (cy - my);
  double sigma = 0.25 * obs.w;  // observations are square
  return std::sqrt(area) * std::exp(-d2 / (2.0 * sigma * sigma));
}

double score_clip(const Clip& clip, const Instruction& instr) {
  clip.validate();
  double sum = 0.0;
  for (int k = Clip::kFrames / 2; k < Clip::kFrames; ++k)
    sum += frame_targetness(clip.frames[k], instr);
  return sum / (Clip::kFrames / 2);
}

double clip_reward(const std::deque<Image>& history, const Instruction& instr) {
  if (history.empty()) throw std::invalid_argument("clip_reward: empty history");
  Clip clip;
  clip.frames.reserve(Clip::kFrames);
  int n = static_cast<int>(history.size());
  for (int k = 0; k < Clip::kFrames; ++k) {
    int idx = n - Clip::kFrames + k;
    clip.frames.push_back(history[static_cast<size_t>(std::max(0, idx))]);
  }
  return score_clip(clip, instr);
}

double clip_reward_from_scores(const std::deque<double>& history_scores) {
  if (history_scores.empty()) throw std::invalid_argument("clip_reward: empty history");
  int n = static_cast<int>(history_scores.size());
  double sum = 0.0;
  for (int k = Clip::kFrames / 2; k < Clip::kFrames; ++k) {
    int idx = n - Clip::kFrames + k;
    sum += history_scores[static_cast<size_t>(std::max(0, idx))];
  }
  return sum / (Clip::kFrames / 2);
}

}  // namespace jumpy
