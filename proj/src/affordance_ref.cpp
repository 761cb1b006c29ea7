// Serial reference path for the affordance map: build every zoom clip, score
// it through the generic scorer interface, average overlapping windows per
// pixel. The fused OpenMP kernel in affordance.cpp is validated against this.
#include "jumpy/affordance.hpp"

namespace jumpy {

AffordanceMap compute_affordance_map_reference(const Image& obs, const ClipScorer& scorer) {
  auto windows = window_grid(obs.w, obs.h);
  std::vector<double> scores(windows.size());
  for (size_t i = 0; i < windows.size(); ++i) scores[i] = scorer(zoom_sequence(obs, windows[i]));

  AffordanceMap map(obs.w, obs.h);
  for (int y = 0; y < obs.h; ++y)
    for (int x = 0; x < obs.w; ++x) {
      double sum = 0.0;
      int n = 0;
      for (size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        if (x >= w.x && x < w.x + w.w && y >= w.y && y < w.y + w.h) {
          sum += scores[i];
          ++n;
        }
      }
      map.at(x, y) = n > 0 ? sum / n : 0.0;
    }
  return map;
}

}  // namespace jumpy
