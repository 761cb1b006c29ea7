#include "jumpy/affordance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jumpy/palette.hpp"

namespace jumpy {

std::vector<WindowRect> window_grid(int obs_w, int obs_h) {
  if (obs_w < 8 || obs_h < 8) throw std::invalid_argument("window_grid: dims must be >= 8");
  int win_w = static_cast<int>(std::lround(0.15 * obs_w));
  int win_h = static_cast<int>(std::lround(0.15 * obs_h));
  std::vector<int> xs(kWindowsPerAxis), ys(kWindowsPerAxis);
  for (int i = 0; i < kWindowsPerAxis; ++i) {
    xs[i] = static_cast<int>(std::lround(static_cast<double>(i) * (obs_w - win_w) / (kWindowsPerAxis - 1)));
    ys[i] = static_cast<int>(std::lround(static_cast<double>(i) * (obs_h - win_h) / (kWindowsPerAxis - 1)));
  }
  std::vector<WindowRect> out;
  out.reserve(kWindowCount);
  for (int iy = 0; iy < kWindowsPerAxis; ++iy)
    for (int ix = 0; ix < kWindowsPerAxis; ++ix)
      out.push_back(WindowRect{xs[ix], ys[iy], win_w, win_h});
  return out;
}

Rect zoom_rect(int obs_w, int obs_h, const WindowRect& window, int k) {
  const double t = static_cast<double>(k) / (Clip::kFrames - 1);
  const double ratio_x = static_cast<double>(window.w) / obs_w;
  const double ratio_y = static_cast<double>(window.h) / obs_h;
  double sw = obs_w * std::pow(ratio_x, t);
  double sh = obs_h * std::pow(ratio_y, t);
  double cx = 0.5 * obs_w + t * (window.x + 0.5 * window.w - 0.5 * obs_w);
  double cy = 0.5 * obs_h + t * (window.y + 0.5 * window.h - 0.5 * obs_h);
  cx = std::clamp(cx, 0.5 * sw, obs_w - 0.5 * sw);
  cy = std::clamp(cy, 0.5 * sh, obs_h - 0.5 * sh);
  return Rect{cx - 0.5 * sw, cy - 0.5 * sh, sw, sh};
}

Clip zoom_sequence(const Image& obs, const WindowRect& window) {
  if (window.x < 0 || window.y < 0 || window.x + window.w > obs.w || window.y + window.h > obs.h)
    throw std::invalid_argument("zoom_sequence: window outside observation");
  Clip clip;
  clip.frames.reserve(Clip::kFrames);
  for (int k = 0; k < Clip::kFrames; ++k) {
    Rect r = zoom_rect(obs.w, obs.h, window, k);
    clip.frames.push_back(crop_resize(obs, r, obs.w, obs.h));
  }
  return clip;
}

namespace {

struct TargetBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive; empty when x1 < x0
  bool empty() const { return x1 < x0 || y1 < y0; }
};

// Bounding box of source pixels that could contribute a color match after
// bilinear blending: a resampled pixel can only match if some tap has the
// signature channel within tolerance of the target value from below.
TargetBox signature_box(const Image& obs, const Instruction& instr) {
  auto col = target_color(instr.target_class);
  int sig = 0;
  for (int c = 1; c < 3; ++c)
    if (col[c] > col[sig]) sig = c;
  const double thresh = col[sig] - kColorTolerance;
  TargetBox b{obs.w, obs.h, -1, -1};
  for (int y = 0; y < obs.h; ++y)
    for (int x = 0; x < obs.w; ++x)
      if (obs.at(x, y, sig) >= thresh) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  return b;
}

// frame_targetness of crop_resize(obs, rect, W, H) without materializing the
// frame; arithmetic matches bilinear_sample + frame_targetness exactly.
double fused_frame_targetness(const Image& obs, const Rect& rect, const std::array<double, 3>& col) {
  const int W = obs.w, H = obs.h;
  const double sx_step = rect.w / W;
  const double sy_step = rect.h / H;
  long count = 0;
  double sum_x = 0.0, sum_y = 0.0;
  for (int y = 0; y < H; ++y) {
    const double sy = rect.y + (y + 0.5) * sy_step - 0.5;
    for (int x = 0; x < W; ++x) {
      const double sx = rect.x + (x + 0.5) * sx_step - 0.5;
      bool match = true;
      for (int ch = 0; ch < 3 && match; ++ch) {
        double v = bilinear_sample(obs, sx, sy, ch);
        if (std::abs(v - col[ch]) > kColorTolerance) match = false;
      }
      if (match) {
        ++count;
        sum_x += x;
        sum_y += y;
      }
    }
  }
  if (count == 0) return 0.0;
  double area = static_cast<double>(count) / (static_cast<double>(W) * H);
  double cx = sum_x / count, cy = sum_y / count;
  double mx = (W - 1) * 0.5, my = (H - 1) * 0.5;
  double d2 = (cx - mx) * (cx - mx) + (cy - my) * (cy - my);
  double sigma = 0.25 * W;
  return std::sqrt(area) * std::exp(-d2 / (2.0 * sigma * sigma));
}

bool rect_misses_box(const Rect& r, const TargetBox& b) {
  // bilinear tap support of the crop, padded by one pixel
  int rx0 = static_cast<int>(std::floor(r.x)) - 1;
  int ry0 = static_cast<int>(std::floor(r.y)) - 1;
  int rx1 = static_cast<int>(std::ceil(r.x + r.w)) + 1;
  int ry1 = static_cast<int>(std::ceil(r.y + r.h)) + 1;
  return rx1 < b.x0 || rx0 > b.x1 || ry1 < b.y0 || ry0 > b.y1;
}

}  // namespace

std::vector<double> window_relevance_scores(const Image& obs, const Instruction& instr) {
  auto windows = window_grid(obs.w, obs.h);
  auto col = target_color(instr.target_class);
  TargetBox box = signature_box(obs, instr);
  std::vector<double> scores(windows.size(), 0.0);
  if (box.empty()) return scores;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < static_cast<int>(windows.size()); ++i) {
    double sum = 0.0;
    for (int k = Clip::kFrames / 2; k < Clip::kFrames; ++k) {
      Rect r = zoom_rect(obs.w, obs.h, windows[i], k);
      if (rect_misses_box(r, box)) continue;  // exact zero, see signature_box
      sum += fused_frame_targetness(obs, r, col);
    }
    scores[i] = sum / (Clip::kFrames / 2);
  }
  return scores;
}

AffordanceMap compute_affordance_map(const Image& obs, const Instruction& instr) {
  auto windows = window_grid(obs.w, obs.h);
  auto scores = window_relevance_scores(obs, instr);

  AffordanceMap map(obs.w, obs.h);
  std::vector<int> cover(map.v.size(), 0);
  // fixed window order keeps the accumulation identical to the reference
  for (size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    for (int y = w.y; y < w.y + w.h; ++y)
      for (int x = w.x; x < w.x + w.w; ++x) {
        map.at(x, y) += scores[i];
        ++cover[static_cast<size_t>(y) * map.w + x];
      }
  }
  for (size_t j = 0; j < map.v.size(); ++j)
    if (cover[j] > 0) map.v[j] /= cover[j];
  return map;
}

GaussianMatrix gaussian_matrix(int w, int h, double sigma_x, double sigma_y) {
  if (sigma_x <= 0.0 || sigma_y <= 0.0) throw std::invalid_argument("gaussian_matrix: sigmas must be > 0");
  GaussianMatrix g;
  g.w = w;
  g.h = h;
  g.sigma_x = sigma_x;
  g.sigma_y = sigma_y;
  g.v.resize(static_cast<size_t>(w) * h);
  const double cx = (w - 1) * 0.5, cy = (h - 1) * 0.5;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double ex = (x - cx) * (x - cx) / (2.0 * sigma_x * sigma_x);
      double ey = (y - cy) * (y - cy) / (2.0 * sigma_y * sigma_y);
      g.v[static_cast<size_t>(y) * w + x] = std::exp(-(ex + ey));
    }
  return g;
}

double intrinsic_reward(const AffordanceMap& map, const GaussianMatrix& gauss) {
  if (map.w != gauss.w || map.h != gauss.h)
    throw std::invalid_argument("intrinsic_reward: dimension mismatch");
  double sum = 0.0;
  for (size_t i = 0; i < map.v.size(); ++i) sum += map.v[i] * gauss.v[i];
  return sum / (static_cast<double>(map.w) * map.h);
}

double composite_reward(double r_env, double r_clip, double r_intr, double alpha) {
  return r_env + r_clip + alpha * r_intr;
}

JumpStats jump_stats(const AffordanceMap& map) {
  const size_t n = map.v.size();
  if (n == 0) throw std::invalid_argument("jump_stats: empty map");
  double mean = 0.0;
  double vmax = map.v[0], vmin = map.v[0];
  for (double v : map.v) {
    mean += v;
    vmax = std::max(vmax, v);
    vmin = std::min(vmin, v);
  }
  mean /= static_cast<double>(n);
  if (vmin == vmax) mean = vmax;  // keep K_a exactly 0 on constant maps
  double var = 0.0;
  for (double v : map.v) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  double sd = std::sqrt(var);

  JumpStats js;
  if (sd < 1e-8) {
    js.k_r = 0.0;  // kurtosis undefined on (near-)constant maps
  } else {
    double acc = 0.0;
    for (double v : map.v) {
      double z = (v - mean) / sd;
      double z2 = z * z;
      acc += z2 * z2;
    }
    js.k_r = acc / static_cast<double>(n);
  }
  js.k_a = vmax - mean;
  js.p_jump = 1.0 / (1.0 + std::exp(-js.k_r)) * js.k_a;
  return js;
}

void ThresholdTracker::update(double p_jump) {
  count_ += 1;
  double d = p_jump - mean_;
  mean_ += d / static_cast<double>(count_);
  m2_ += d * (p_jump - mean_);
}

std::optional<double> ThresholdTracker::threshold() const {
  if (count_ < 2) return std::nullopt;
  return mean_ + std::sqrt(m2_ / static_cast<double>(count_));
}

bool ThresholdTracker::jump_flag(double p_jump) const {
  auto t = threshold();
  return t.has_value() && p_jump > *t;
}

void ThresholdTracker::restore(long long count, double mean, double m2) {
  count_ = count;
  mean_ = mean;
  m2_ = m2;
}

int best_window_by_map_mean(const AffordanceMap& map) {
  auto windows = window_grid(map.w, map.h);
  int best = 0;
  double best_mean = -1.0;
  for (size_t i = 0; i < windows.size(); ++i) {
    const auto& w = windows[i];
    double sum = 0.0;
    for (int y = w.y; y < w.y + w.h; ++y)
      for (int x = w.x; x < w.x + w.w; ++x) sum += map.at(x, y);
    double m = sum / (static_cast<double>(w.w) * w.h);
    if (m > best_mean) {
      best_mean = m;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace jumpy
