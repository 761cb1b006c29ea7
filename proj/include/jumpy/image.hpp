#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace jumpy {

// Row-major interleaved image, values in [0,1].
struct Image {
  int w = 0;
  int h = 0;
  int c = 0;
  std::vector<double> px;

  Image() = default;
  Image(int w_, int h_, int c_) : w(w_), h(h_), c(c_), px(static_cast<size_t>(w_) * h_ * c_, 0.0) {}

  double& at(int x, int y, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  double at(int x, int y, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return px.size(); }
};

// Continuous sub-rectangle in pixel-edge coordinates (pixel i spans [i, i+1)).
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;
};

// Integer window rectangle (top-left corner + size).
struct WindowRect {
  int x = 0, y = 0, w = 0, h = 0;
};

double bilinear_sample(const Image& img, double sx, double sy, int ch);

// Resample `rect` of `src` to a dst_w x dst_h image (bilinear, clamped taps).
Image crop_resize(const Image& src, const Rect& rect, int dst_w, int dst_h);

Image resize(const Image& src, int dst_w, int dst_h);

// Flatten an image to a dst x dst x c vector (bilinear resample).
std::vector<double> downsample_flat(const Image& src, int dst);

void write_ppm(const Image& img, const std::string& path);
void write_pgm(const std::vector<double>& values, int w, int h, const std::string& path);

// Flat map file: two little-endian uint32 dims, then row-major float32 values.
void write_map_bin(const std::vector<double>& values, uint32_t w, uint32_t h, const std::string& path);
std::vector<double> read_map_bin(const std::string& path, uint32_t& w, uint32_t& h);

}  // namespace jumpy
