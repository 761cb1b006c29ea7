#include "jumpy/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace jumpy {

static int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

double bilinear_sample(const Image& img, double sx, double sy, int ch) {
  int x0 = static_cast<int>(std::floor(sx));
  int y0 = static_cast<int>(std::floor(sy));
  double fx = sx - x0;
  double fy = sy - y0;
  int x0c = clampi(x0, 0, img.w - 1), x1c = clampi(x0 + 1, 0, img.w - 1);
  int y0c = clampi(y0, 0, img.h - 1), y1c = clampi(y0 + 1, 0, img.h - 1);
  double v00 = img.at(x0c, y0c, ch), v01 = img.at(x1c, y0c, ch);
  double v10 = img.at(x0c, y1c, ch), v11 = img.at(x1c, y1c, ch);
  double top = v00 + fx * (v01 - v00);
  double bot = v10 + fx * (v11 - v10);
  return top + fy * (bot - top);
}

Image crop_resize(const Image& src, const Rect& rect, int dst_w, int dst_h) {
  Image out(dst_w, dst_h, src.c);
  const double sx_step = rect.w / dst_w;
  const double sy_step = rect.h / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    const double sy = rect.y + (y + 0.5) * sy_step - 0.5;
    for (int x = 0; x < dst_w; ++x) {
      const double sx = rect.x + (x + 0.5) * sx_step - 0.5;
      for (int ch = 0; ch < src.c; ++ch) out.at(x, y, ch) = bilinear_sample(src, sx, sy, ch);
    }
  }
  return out;
}

Image resize(const Image& src, int dst_w, int dst_h) {
  return crop_resize(src, Rect{0.0, 0.0, static_cast<double>(src.w), static_cast<double>(src.h)},
                     dst_w, dst_h);
}

std::vector<double> downsample_flat(const Image& src, int dst) {
  Image small = resize(src, dst, dst);
  return small.px;
}

void write_ppm(const Image& img, const std::string& path) {
  if (img.c != 3) throw std::runtime_error("write_ppm: need 3 channels");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  std::fprintf(f, "P6\n%d %d\n255\n", img.w, img.h);
  std::vector<unsigned char> row(static_cast<size_t>(img.w) * 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        double v = std::clamp(img.at(x, y, ch), 0.0, 1.0);
        row[static_cast<size_t>(x) * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    std::fwrite(row.data(), 1, row.size(), f);
  }
  std::fclose(f);
}

void write_pgm(const std::vector<double>& values, int w, int h, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_pgm: cannot open " + path);
  double vmax = 0.0;
  for (double v : values) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;
  std::fprintf(f, "P5\n%d %d\n255\n", w, h);
  std::vector<unsigned char> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = std::clamp(values[static_cast<size_t>(y) * w + x] / vmax, 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    std::fwrite(row.data(), 1, row.size(), f);
  }
  std::fclose(f);
}

void write_map_bin(const std::vector<double>& values, uint32_t w, uint32_t h, const std::string& path) {
  if (values.size() != static_cast<size_t>(w) * h) throw std::runtime_error("write_map_bin: size mismatch");
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_map_bin: cannot open " + path);
  uint32_t dims[2] = {w, h};
  std::fwrite(dims, sizeof(uint32_t), 2, f);
  std::vector<float> buf(values.begin(), values.end());
  std::fwrite(buf.data(), sizeof(float), buf.size(), f);
  std::fclose(f);
}

std::vector<double> read_map_bin(const std::string& path, uint32_t& w, uint32_t& h) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("read_map_bin: cannot open " + path);
  uint32_t dims[2];
  if (std::fread(dims, sizeof(uint32_t), 2, f) != 2) {
    std::fclose(f);
    throw std::runtime_error("read_map_bin: truncated header");
  }
  w = dims[0];
  h = dims[1];
  std::vector<float> buf(static_cast<size_t>(w) * h);
  size_t got = std::fread(buf.data(), sizeof(float), buf.size(), f);
  std::fclose(f);
  if (got != buf.size()) throw std::runtime_error("read_map_bin: truncated data");
  return std::vector<double>(buf.begin(), buf.end());
}

}  // namespace jumpy
