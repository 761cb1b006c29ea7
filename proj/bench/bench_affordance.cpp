// Compares the serial reference affordance-map implementation against the
// fused OpenMP kernel on rendered scenes.
#include <chrono>
#include <cmath>
#include <cstdio>

#include "jumpy/affordance.hpp"
#include "jumpy/env.hpp"

using namespace jumpy;
namespace chrono = std::chrono;

static double time_ms(const std::function<void()>& fn, int iters) {
  auto t0 = chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  auto t1 = chrono::steady_clock::now();
  return chrono::duration<double, std::milli>(t1 - t0).count() / iters;
}

int main() {
  for (int obs_size : {32, 64}) {
    WorldConfig cfg;
    cfg.world_size = 16;
    cfg.view_radius = 3;
    cfg.obs_size = obs_size;
    cfg.seed = 7;
    auto [state, obs] = reset(cfg, 1);
    // place a visible target so the kernel does real work
    state.agent_x = 8;
    state.agent_y = 8;
    state.heading = 0;
    state.targets = {Target{9, 6, cfg.target_class, 1}};
    obs = render(state);
    Instruction instr{"bench", cfg.target_class};

    const int iters = obs_size == 32 ? 20 : 5;
    double ref_ms = time_ms(
        [&] { compute_affordance_map_reference(obs, [&](const Clip& c) { return score_clip(c, instr); }); },
        iters);
    double fused_ms = time_ms([&] { compute_affordance_map(obs, instr); }, iters * 4);

    AffordanceMap a = compute_affordance_map_reference(
        obs, [&](const Clip& c) { return score_clip(c, instr); });
    AffordanceMap b = compute_affordance_map(obs, instr);
    double max_diff = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) max_diff = std::max(max_diff, std::abs(a.v[i] - b.v[i]));

    std::printf("obs %dx%d  reference %.2f ms  fused+omp %.2f ms  speedup %.1fx  max|diff| %.2e\n",
                obs_size, obs_size, ref_ms, fused_ms, ref_ms / fused_ms, max_diff);
  }
  return 0;
}
