#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jumpy/replay.hpp"

using namespace jumpy;

namespace {

ShortTuple mk_step(double reward, double r_intr, int jump, int action = 0, double cont = 1.0) {
  ShortTuple t;
  t.obs_ds.assign(12, 0.1f);
  t.map_ds.assign(4, 0.2f);
  t.action = action;
  t.reward = reward;
  t.cont = cont;
  t.jump = jump;
  t.delta = 1.0;
  t.G = reward;
  t.r_intr = r_intr;
  t.p_jump = jump ? 0.9 : 0.1;
  return t;
}

LongTuple mk_candidate(double r_intr_sim) {
  LongTuple lt;
  lt.obs_ds.assign(12, 0.3f);
  lt.map_ds.assign(4, 0.4f);
  lt.reward = 0.5;
  lt.r_intr_sim = r_intr_sim;
  return lt;
}

}  // namespace

TEST_CASE("record keeps pending bookkeeping consistent") {
  ReplayBuffer buf(1000);
  buf.begin_episode();
  buf.record_step(mk_step(0.1, 0.0, 0));
  CHECK(buf.pending_count() == 0);
  buf.record_step(mk_step(0.2, 0.0, 1), [] { return mk_candidate(0.5); });
  CHECK(buf.pending_count() == 1);
  CHECK(buf.total_steps() == 2);
  CHECK(buf.episodes().back().pending[0].anchor_index == 1);
}

TEST_CASE("next-step satisfaction gives a one-step interval") {
  ReplayBuffer buf(1000);
  buf.begin_episode();
  buf.record_step(mk_step(0.0, 0.0, 1), [] { return mk_candidate(0.4); });
  buf.record_step(mk_step(0.7, 0.9, 0));
  auto done = buf.finalize_pending(0.9, 0.9);
  REQUIRE(done.size() == 1);
  CHECK(done[0].delta == 1.0);
  CHECK(done[0].G == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(buf.finalized_count() == 1);
  CHECK(buf.pending_count() == 0);
}

TEST_CASE("discounted sum over a three-step interval") {
  // rewards after the anchor: 1, 0, 2 with gamma 0.9 -> 1 + 0 + 0.81*2 = 2.62
  ReplayBuffer buf(1000);
  buf.begin_episode();
  buf.record_step(mk_step(0.0, 0.0, 1), [] { return mk_candidate(0.8); });
  double r_intrs[3] = {0.1, 0.2, 0.85};
  double rewards[3] = {1.0, 0.0, 2.0};
  std::vector<LongTuple> done;
  for (int i = 0; i < 3; ++i) {
    buf.record_step(mk_step(rewards[i], r_intrs[i], 0));
    auto d = buf.finalize_pending(r_intrs[i], 0.9);
    for (auto& lt : d) done.push_back(lt);
  }
  REQUIRE(done.size() == 1);
  CHECK(done[0].delta == 3.0);
  CHECK(done[0].G == doctest::Approx(2.62).epsilon(1e-9));
}

TEST_CASE("episode end discards unsatisfied candidates") {
  ReplayBuffer buf(1000);
  buf.begin_episode();
  buf.record_step(mk_step(0.0, 0.0, 1), [] { return mk_candidate(100.0); });
  buf.record_step(mk_step(0.0, 0.1, 0, 0, 0.0));
  buf.finalize_pending(0.1, 0.9);
  buf.end_episode();
  CHECK(buf.pending_count() == 0);
  CHECK(buf.discarded_count() == 1);
  CHECK(buf.finalized_count() == 0);
  Rng rng(1);
  auto batch = buf.sample_batch(1, 2, rng);
  REQUIRE(batch.has_value());
  CHECK(batch->longs.empty());
}

TEST_CASE("conservation: jumps equal pending plus finalized plus discarded") {
  ReplayBuffer buf(100000);
  Rng rng(7);
  for (int ep = 0; ep < 20; ++ep) {
    buf.begin_episode();
    int len = 5 + rng.uniform_int(20);
    for (int i = 0; i < len; ++i) {
      int j = rng.uniform() < 0.3 ? 1 : 0;
      double r_intr = rng.uniform();
      buf.record_step(mk_step(rng.uniform(), r_intr, j),
                      [&] { return mk_candidate(rng.uniform() * 1.2); });
      buf.finalize_pending(r_intr, 0.99);
    }
    buf.end_episode();
  }
  CHECK(buf.jump_step_count() ==
        buf.pending_count() + buf.finalized_count() + buf.discarded_count());
}

TEST_CASE("first-hit property holds on stored diagnostics") {
  ReplayBuffer buf(100000);
  Rng rng(8);
  buf.begin_episode();
  std::vector<double> r_intr_seq;
  for (int i = 0; i < 200; ++i) {
    int j = rng.uniform() < 0.25 ? 1 : 0;
    double r_intr = rng.uniform();
    r_intr_seq.push_back(r_intr);
    buf.record_step(mk_step(rng.uniform(), r_intr, j), [&] { return mk_candidate(rng.uniform()); });
    buf.finalize_pending(r_intr, 0.9);
  }
  buf.end_episode();
  const auto& ep = buf.episodes().back();
  for (const auto& lt : ep.longs) {
    int anchor = lt.anchor_index;
    int hit = anchor + static_cast<int>(lt.delta);
    CHECK(r_intr_seq[static_cast<size_t>(hit)] >= lt.r_intr_sim);
    for (int k = anchor + 1; k < hit; ++k) CHECK(r_intr_seq[static_cast<size_t>(k)] < lt.r_intr_sim);
    // stored G matches a recount from stored step rewards
    double g = 0.0, disc = 1.0;
    for (int i = anchor + 1; i <= hit; ++i) {
      g += disc * ep.steps[static_cast<size_t>(i)].reward;
      disc *= 0.9;
    }
    CHECK(lt.G == doctest::Approx(g).epsilon(1e-9));
  }
}

TEST_CASE("sampling respects episode bounds and anchor windows") {
  ReplayBuffer buf(100000);
  Rng rng(9);
  std::vector<int> ep_lens;
  for (int ep = 0; ep < 6; ++ep) {
    buf.begin_episode();
    int len = 4 + rng.uniform_int(30);
    ep_lens.push_back(len);
    for (int i = 0; i < len; ++i) {
      int j = rng.uniform() < 0.3 ? 1 : 0;
      double r_intr = rng.uniform();
      buf.record_step(mk_step(0.1 * i, r_intr, j, rng.uniform_int(5)),
                      [&] { return mk_candidate(rng.uniform()); });
      buf.finalize_pending(r_intr, 0.9);
    }
    buf.end_episode();
  }
  Rng srng(10);
  for (int draw = 0; draw < 200; ++draw) {
    auto batch = buf.sample_batch(4, 8, srng);
    REQUIRE(batch.has_value());
    for (const auto& it : batch->longs) {
      CHECK(it.offset >= 0);
      CHECK(it.offset < 8);
      CHECK(it.row >= 0);
      CHECK(it.row < 4);
      // anchored slots must be valid
      CHECK(batch->valid[static_cast<size_t>(it.row) * 8 + it.offset] == 1);
      CHECK(it.delta >= 1.0);
    }
    // padded tails only after valid prefixes
    for (int b = 0; b < 4; ++b) {
      bool seen_invalid = false;
      for (int t = 0; t < 8; ++t) {
        bool v = batch->valid[static_cast<size_t>(b) * 8 + t] == 1;
        if (!v) seen_invalid = true;
        if (seen_invalid) CHECK(!v);
      }
      CHECK(batch->valid[static_cast<size_t>(b) * 8] == 1);
    }
  }
}

TEST_CASE("not ready before enough steps exist") {
  ReplayBuffer buf(1000);
  Rng rng(11);
  CHECK(!buf.sample_batch(2, 8, rng).has_value());
  buf.begin_episode();
  for (int i = 0; i < 10; ++i) buf.record_step(mk_step(0.0, 0.0, 0));
  CHECK(!buf.sample_batch(2, 8, rng).has_value());  // 10 < 16
  for (int i = 0; i < 10; ++i) buf.record_step(mk_step(0.0, 0.0, 0));
  CHECK(buf.sample_batch(2, 8, rng).has_value());
}

TEST_CASE("whole-episode eviction keeps the step budget") {
  ReplayBuffer buf(25);
  for (int ep = 0; ep < 5; ++ep) {
    buf.begin_episode();
    for (int i = 0; i < 10; ++i) buf.record_step(mk_step(0.0, 0.0, 0));
    buf.end_episode();
  }
  CHECK(buf.total_steps() <= 25);
  CHECK(buf.episodes().size() <= 3);
}

TEST_CASE("episode log round-trips frames") {
  const std::string path = "/tmp/jumpy_test_log.lsrb";
  {
    EpisodeLogWriter log(path);
    ShortTuple a = mk_step(0.5, 0.2, 1, 3);
    a.r_env = 1.0;
    a.r_clip = 0.25;
    log.step(a);
    LongTuple lt = mk_candidate(0.7);
    lt.delta = 4;
    lt.G = 1.5;
    log.long_finalized(lt);
    log.episode_end();
  }
  auto recs = read_episode_log(path);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].type == 1);
  CHECK(recs[0].reward == doctest::Approx(0.5));
  CHECK(recs[0].r_env == doctest::Approx(1.0));
  CHECK(recs[0].r_clip == doctest::Approx(0.25));
  CHECK(recs[0].action == 3);
  CHECK(recs[0].jump == 1);
  CHECK(recs[1].type == 2);
  CHECK(recs[1].delta == doctest::Approx(4));
  CHECK(recs[1].G == doctest::Approx(1.5));
  CHECK(recs[2].type == 3);
}

// ---- long-candidate construction against the oracle arithmetic ----

TEST_CASE("the best-window crop becomes the simulated observation") {
  WorldConfig cfg;
  cfg.world_size = 16;
  cfg.view_radius = 3;
  cfg.obs_size = 64;
  cfg.seed = 3;
  auto [state, obs0] = reset(cfg, 5);
  state.agent_x = 8;
  state.agent_y = 8;
  state.heading = 0;
  state.targets = {Target{9, 6, cfg.target_class, 1}};
  Image obs = render(state);

  Instruction instr{"t", cfg.target_class};
  AffordanceMap map = compute_affordance_map(obs, instr);
  GaussianMatrix gauss = gaussian_matrix(64, 64, 128.0, 80.0);

  WmDims d;
  d.h = 8;
  d.z_rows = 2;
  d.z_cols = 4;
  d.hidden = 12;
  d.obs_ds = 4;
  WorldModel wm(d, 61);
  ActorCritic ac(d.state_dim(), 12, 5, 62);
  LatentState anchor;
  anchor.h.assign(static_cast<size_t>(d.h), 0.1);
  anchor.z.assign(static_cast<size_t>(d.z_flat()), 0.0);
  anchor.z[0] = 1.0;
  anchor.z[d.z_cols] = 1.0;

  auto oracle = [&](const Image& o) { return compute_affordance_map(o, instr); };
  Rng rng(63);
  LongTuple lt = make_long_candidate(obs, map, anchor, wm, ac, oracle, instr, gauss, 1.0, rng);

  // expected simulated view: the argmax-mean window resized, downsampled
  int best = best_window_by_map_mean(map);
  auto windows = window_grid(64, 64);
  const auto& w = windows[static_cast<size_t>(best)];
  Image crop = crop_resize(obs,
                           Rect{static_cast<double>(w.x), static_cast<double>(w.y),
                                static_cast<double>(w.w), static_cast<double>(w.h)},
                           64, 64);
  std::vector<float> expect_ds = downsample_f32(crop, d.obs_ds);
  REQUIRE(lt.obs_ds.size() == expect_ds.size());
  for (size_t i = 0; i < expect_ds.size(); ++i) CHECK(lt.obs_ds[i] == expect_ds[i]);

  // reward pieces recomputed through the oracle
  AffordanceMap crop_map = compute_affordance_map(crop, instr);
  double r_intr = intrinsic_reward(crop_map, gauss);
  Clip still;
  for (int k = 0; k < 16; ++k) still.frames.push_back(crop);
  double expect_r = composite_reward(0.0, score_clip(still, instr), r_intr, 1.0);
  CHECK(lt.reward == doctest::Approx(expect_r).epsilon(1e-12));
  CHECK(lt.r_intr_sim == doctest::Approx(r_intr).epsilon(1e-12));
  CHECK(lt.cont == 1.0);
  CHECK(lt.action >= 0);
  CHECK(lt.action < 5);

  // zooming to a target-filled window must beat the wide view's reward
  Clip wide;
  for (int k = 0; k < 16; ++k) wide.frames.push_back(obs);
  double r_wide = composite_reward(0.0, score_clip(wide, instr), intrinsic_reward(map, gauss), 1.0);
  CHECK(lt.reward > r_wide);
}

TEST_CASE("uniform maps break window ties toward index zero") {
  AffordanceMap uniform(64, 64);
  for (auto& v : uniform.v) v = 0.25;
  CHECK(best_window_by_map_mean(uniform) == 0);
}
