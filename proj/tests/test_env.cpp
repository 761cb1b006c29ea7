#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "jumpy/env.hpp"
#include "jumpy/rng.hpp"
#include "jumpy/palette.hpp"

using namespace jumpy;

static WorldConfig small_cfg() {
  WorldConfig cfg;
  cfg.world_size = 16;
  cfg.view_radius = 3;
  cfg.obs_size = 64;
  cfg.max_steps = 50;
  cfg.seed = 42;
  return cfg;
}

static long count_target_pixels(const Observation& obs, const std::string& cls) {
  auto col = target_color(cls);
  long n = 0;
  for (int y = 0; y < obs.h; ++y)
    for (int x = 0; x < obs.w; ++x)
      if (std::abs(obs.at(x, y, 0) - col[0]) <= kColorTolerance &&
          std::abs(obs.at(x, y, 1) - col[1]) <= kColorTolerance &&
          std::abs(obs.at(x, y, 2) - col[2]) <= kColorTolerance)
        ++n;
  return n;
}

TEST_CASE("reset is bit-deterministic") {
  auto cfg = small_cfg();
  auto [s1, o1] = reset(cfg, 7);
  auto [s2, o2] = reset(cfg, 7);
  CHECK(s1.agent_x == s2.agent_x);
  CHECK(s1.agent_y == s2.agent_y);
  CHECK(s1.heading == s2.heading);
  REQUIRE(s1.targets.size() == s2.targets.size());
  CHECK(s1.targets[0].x == s2.targets[0].x);
  CHECK(o1.px == o2.px);

  auto [s3, o3] = reset(cfg, 8);
  CHECK(o1.px != o3.px);
}

TEST_CASE("initial target distance respects the view radius") {
  auto cfg = small_cfg();
  for (uint64_t ep = 0; ep < 20; ++ep) {
    auto [s, o] = reset(cfg, ep);
    for (const auto& t : s.targets) {
      int cheb = std::max(std::abs(t.x - s.agent_x), std::abs(t.y - s.agent_y));
      CHECK(cheb >= cfg.view_radius);
    }
  }
}

TEST_CASE("placement failure when the world cannot hold the targets") {
  auto cfg = small_cfg();
  cfg.n_targets = cfg.world_size * cfg.world_size;
  CHECK_THROWS_AS(reset(cfg, 0), PlacementError);
}

TEST_CASE("forward into a boundary does not move the agent") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 3);
  s.agent_x = 0;
  s.agent_y = 5;
  s.heading = 3;  // west
  auto [s2, res] = step(s, Action::Forward);
  CHECK(s2.agent_x == 0);
  CHECK(s2.agent_y == 5);
  CHECK(res.r_env == 0.0);
  CHECK(res.cont == 1);
}

TEST_CASE("interact with the facing-adjacent target succeeds") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 3);
  s.agent_x = 8;
  s.agent_y = 8;
  s.heading = 0;  // north
  s.targets = {Target{8, 7, cfg.target_class, 1}};
  auto [s2, res] = step(s, Action::Interact);
  CHECK(res.r_env == 1.0);
  CHECK(res.cont == 0);
  CHECK(s2.done);
  CHECK_THROWS_AS(step(s2, Action::NoOp), std::logic_error);
}

TEST_CASE("step cap ends the episode with no reward") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 4);
  s.step_count = cfg.max_steps - 1;
  auto [s2, res] = step(s, Action::NoOp);
  CHECK(res.cont == 0);
  CHECK(res.r_env == 0.0);
  CHECK(s2.done);
}

TEST_CASE("render is pure and bounded") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 5);
  Observation a = render(s);
  Observation b = render(s);
  CHECK(a.px == b.px);
  for (double v : a.px) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("facing-adjacent target lands near the image center") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 6);
  s.agent_x = 8;
  s.agent_y = 8;
  s.heading = 2;  // south; rotation should still center it
  s.targets = {Target{8, 9, cfg.target_class, 1}};
  Observation obs = render(s);

  auto col = target_color(cfg.target_class);
  double sx = 0, sy = 0;
  long n = 0;
  for (int y = 0; y < obs.h; ++y)
    for (int x = 0; x < obs.w; ++x)
      if (std::abs(obs.at(x, y, 0) - col[0]) <= kColorTolerance) {
        sx += x;
        sy += y;
        ++n;
      }
  REQUIRE(n > 0);
  double cx = sx / n, cy = sy / n;
  // central window holding 25% of the image area (half the side length)
  double lo = obs.w * 0.25, hi = obs.w * 0.75;
  CHECK(cx >= lo);
  CHECK(cx <= hi);
  CHECK(cy >= lo);
  CHECK(cy <= hi);
}

TEST_CASE("target outside the view radius renders no target pixels") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 9);
  s.agent_x = 2;
  s.agent_y = 2;
  s.targets = {Target{12, 12, cfg.target_class, 1}};
  Observation obs = render(s);
  CHECK(count_target_pixels(obs, cfg.target_class) == 0);
}

TEST_CASE("target pixel area grows monotonically along a straight approach") {
  auto cfg = small_cfg();
  auto [s, o] = reset(cfg, 10);
  s.agent_x = 2;
  s.agent_y = 8;
  s.heading = 1;  // east
  s.targets = {Target{9, 8, cfg.target_class, 1}};
  s.step_count = 0;
  long prev = count_target_pixels(render(s), cfg.target_class);
  for (int i = 0; i < 5; ++i) {
    auto [s2, res] = step(s, Action::Forward);
    s = s2;
    long cur = count_target_pixels(res.obs, cfg.target_class);
    CHECK(cur >= prev);
    prev = cur;
  }
  CHECK(prev > 0);
}

TEST_CASE("every episode emits cont=0 exactly once") {
  auto cfg = small_cfg();
  cfg.max_steps = 30;
  for (uint64_t ep = 0; ep < 5; ++ep) {
    auto [s, o] = reset(cfg, ep);
    int zeros = 0;
    Rng rng(ep);
    while (!s.done) {
      auto [s2, res] = step(s, static_cast<Action>(rng.uniform_int(kNumActions)));
      s = s2;
      if (res.cont == 0) ++zeros;
    }
    CHECK(zeros == 1);
  }
}

TEST_CASE("action sequences replay bit-exactly") {
  auto cfg = small_cfg();
  std::vector<Action> seq = {Action::Forward, Action::TurnLeft, Action::Forward, Action::Interact,
                             Action::NoOp, Action::TurnRight, Action::Forward};
  uint64_t ck1 = 0, ck2 = 0;
  for (int run = 0; run < 2; ++run) {
    auto [s, o] = reset(cfg, 11);
    uint64_t ck = pixel_checksum(o);
    for (Action a : seq) {
      if (s.done) break;
      auto [s2, res] = step(s, a);
      s = s2;
      ck ^= pixel_checksum(res.obs) + 0x9e3779b97f4a7c15ULL + (ck << 6);
    }
    (run == 0 ? ck1 : ck2) = ck;
  }
  CHECK(ck1 == ck2);
}

TEST_CASE("config validation rejects bad values") {
  WorldConfig c = small_cfg();
  c.obs_size = 4;
  CHECK_THROWS(c.validate());
  c = small_cfg();
  c.view_radius = 8;  // 2*8+1 > 16
  CHECK_THROWS(c.validate());
  c = small_cfg();
  c.max_steps = 0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("world config loads from key=value text") {
  auto kv = KvConfig::from_string(
      "world_size = 20\nview_radius = 4\nobs_size = 32\ntarget_class = blue\nmax_steps = 77\nseed = 5\n");
  WorldConfig c = WorldConfig::from_kv(kv);
  CHECK(c.world_size == 20);
  CHECK(c.view_radius == 4);
  CHECK(c.obs_size == 32);
  CHECK(c.target_class == "blue");
  CHECK(c.max_steps == 77);
  CHECK(c.seed == 5);
}
