#include "jumpy/env.hpp"

#include <algorithm>
#include <cmath>

#include "jumpy/palette.hpp"
#include "jumpy/rng.hpp"

namespace jumpy {

void WorldConfig::validate() const {
  if (world_size < 16) throw std::invalid_argument("world_size must be >= 16");
  if (obs_size < 8) throw std::invalid_argument("obs_size must be >= 8");
  if (view_radius < 1 || 2 * view_radius + 1 > world_size)
    throw std::invalid_argument("view window must fit inside the world");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (n_targets < 1) throw std::invalid_argument("n_targets must be >= 1");
  target_color(target_class);  // throws on unknown class
}

WorldConfig WorldConfig::from_kv(const KvConfig& kv, const std::string& prefix) {
  WorldConfig c;
  c.world_size = kv.get_int(prefix + "world_size", c.world_size);
  c.view_radius = kv.get_int(prefix + "view_radius", c.view_radius);
  c.obs_size = kv.get_int(prefix + "obs_size", c.obs_size);
  c.target_class = kv.get_str(prefix + "target_class", c.target_class);
  c.n_targets = kv.get_int(prefix + "n_targets", c.n_targets);
  c.max_steps = kv.get_int(prefix + "max_steps", c.max_steps);
  c.seed = static_cast<uint64_t>(kv.get_i64(prefix + "seed", static_cast<long long>(c.seed)));
  c.validate();
  return c;
}

static int heading_dx(int heading) {
  static constexpr int dx[4] = {0, 1, 0, -1};
  return dx[heading];
}
static int heading_dy(int heading) {
  static constexpr int dy[4] = {-1, 0, 1, 0};
  return dy[heading];
}

// view offset (ox,oy) with view-up = heading  ->  world offset (dx,dy)
static void view_to_world(int heading, int ox, int oy, int& dx, int& dy) {
  switch (heading) {
    case 0: dx = ox; dy = oy; break;
    case 1: dx = -oy; dy = ox; break;
    case 2: dx = -ox; dy = -oy; break;
    default: dx = oy; dy = -ox; break;
  }
}

// world offset -> view offset (inverse rotation)
static void world_to_view(int heading, int dx, int dy, int& ox, int& oy) {
  switch (heading) {
    case 0: ox = dx; oy = dy; break;
    case 1: ox = dy; oy = -dx; break;
    case 2: ox = -dx; oy = -dy; break;
    default: ox = -dy; oy = dx; break;
  }
}

static const Target* target_at(const WorldState& s, int x, int y) {
  for (const auto& t : s.targets)
    if (t.x == x && t.y == y) return &t;
  return nullptr;
}

std::pair<WorldState, Observation> reset(const WorldConfig& cfg, uint64_t episode_seed) {
  cfg.validate();
  WorldState s;
  s.cfg = cfg;
  s.noise_seed = hash_mix(cfg.seed, episode_seed);
  Rng rng(hash_mix(cfg.seed ^ 0x7f4a7c15ULL, episode_seed));

  const int n = cfg.world_size;
  s.agent_x = rng.uniform_int(n);
  s.agent_y = rng.uniform_int(n);
  s.heading = rng.uniform_int(4);

  for (int i = 0; i < cfg.n_targets; ++i) {
    std::vector<std::pair<int, int>> free_cells;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        int cheb = std::max(std::abs(x - s.agent_x), std::abs(y - s.agent_y));
        if (cheb < cfg.view_radius) continue;  // targets start distant
        if (x == s.agent_x && y == s.agent_y) continue;
        if (target_at(s, x, y)) continue;
        free_cells.emplace_back(x, y);
      }
    if (free_cells.empty()) throw PlacementError("no free cell for target placement");
    auto [tx, ty] = free_cells[rng.uniform_int(static_cast<int>(free_cells.size()))];
    s.targets.push_back(Target{tx, ty, cfg.target_class, 1});
  }
  Observation obs = render(s);
  return {std::move(s), std::move(obs)};
}

std::pair<WorldState, StepResult> step(const WorldState& state, Action action) {
  if (state.done) throw std::logic_error("step() on a finished episode");
  WorldState s = state;
  StepResult res;

  switch (action) {
    case Action::TurnLeft: s.heading = (s.heading + 3) % 4; break;
    case Action::TurnRight: s.heading = (s.heading + 1) % 4; break;
    case Action::Forward: {
      int nx = s.agent_x + heading_dx(s.heading);
      int ny = s.agent_y + heading_dy(s.heading);
      bool inside = nx >= 0 && nx < s.cfg.world_size && ny >= 0 && ny < s.cfg.world_size;
      if (inside && !target_at(s, nx, ny)) {  // targets are solid
        s.agent_x = nx;
        s.agent_y = ny;
      }
      break;
    }
    case Action::Interact: {
      int fx = s.agent_x + heading_dx(s.heading);
      int fy = s.agent_y + heading_dy(s.heading);
      if (target_at(s, fx, fy)) {
        res.r_env = 1.0;
        s.done = true;
      }
      break;
    }
    case Action::NoOp: break;
  }

  s.step_count += 1;
  if (s.step_count >= s.cfg.max_steps) s.done = true;
  res.cont = s.done ? 0 : 1;
  res.obs = render(s);
  return {std::move(s), std::move(res)};
}

Observation render(const WorldState& s) {
  const int obs = s.cfg.obs_size;
  const int vr = s.cfg.view_radius;
  const int cells = 2 * vr + 1;
  const double ppc = static_cast<double>(obs) / cells;
  Observation img(obs, obs, 3);

  // background: per-world-cell jittered gray, dark outside the world
  for (int py = 0; py < obs; ++py) {
    int vy = std::min(static_cast<int>(py / ppc), cells - 1);
    for (int px = 0; px < obs; ++px) {
      int vx = std::min(static_cast<int>(px / ppc), cells - 1);
      int dx, dy;
      view_to_world(s.heading, vx - vr, vy - vr, dx, dy);
      int wx = s.agent_x + dx, wy = s.agent_y + dy;
      double r, g, b;
      if (wx < 0 || wx >= s.cfg.world_size || wy < 0 || wy >= s.cfg.world_size) {
        r = g = b = 0.08;
      } else {
        uint64_t hh = hash_mix(s.noise_seed, (static_cast<uint64_t>(wx) << 32) | static_cast<uint32_t>(wy));
        double u = static_cast<double>(hh >> 11) * 0x1.0p-53;
        double v = 0.22 + 0.10 * u;
        r = v;
        g = v;
        b = v * 0.92;
      }
      img.at(px, py, 0) = r;
      img.at(px, py, 1) = g;
      img.at(px, py, 2) = b;
    }
  }

  // targets: distance-scaled discs as the perspective proxy
  const double r_max = 1.8 * ppc;
  for (const auto& t : s.targets) {
    int dx = t.x - s.agent_x, dy = t.y - s.agent_y;
    int cheb = std::max(std::abs(dx), std::abs(dy));
    if (cheb > vr) continue;
    int ox, oy;
    world_to_view(s.heading, dx, dy, ox, oy);
    double cx = (ox + vr + 0.5) * ppc;
    double cy = (oy + vr + 0.5) * ppc;
    double radius = std::max(1.0, r_max * (1.0 - static_cast<double>(cheb) / (vr + 1)));
    auto col = target_color(t.cls);
    int x0 = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    int x1 = std::min(obs - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    int y0 = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    int y1 = std::min(obs - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    for (int py = y0; py <= y1; ++py)
      for (int px = x0; px <= x1; ++px) {
        double ddx = px + 0.5 - cx, ddy = py + 0.5 - cy;
        if (ddx * ddx + ddy * ddy <= radius * radius) {
          img.at(px, py, 0) = col[0];
          img.at(px, py, 1) = col[1];
          img.at(px, py, 2) = col[2];
        }
      }
  }
  return img;
}

uint64_t pixel_checksum(const Observation& obs) {
  uint64_t h = 1469598103934665603ULL;
  const unsigned char* bytes = reinterpret_cast<const unsigned char*>(obs.px.data());
  size_t nbytes = obs.px.size() * sizeof(double);
  for (size_t i = 0; i < nbytes; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace jumpy
