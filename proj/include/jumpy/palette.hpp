#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace jumpy {

// Shared target palette: the environment draws these colors, the scorer matches them.
// Colors are far from the grayish background so bilinear blends cannot fake a match.
inline std::array<double, 3> target_color(const std::string& cls) {
  if (cls == "red") return {0.95, 0.15, 0.15};
  if (cls == "green") return {0.15, 0.90, 0.20};
  if (cls == "blue") return {0.15, 0.25, 0.95};
  throw std::runtime_error("unknown target class: " + cls);
}

constexpr double kColorTolerance = 0.12;

}  // namespace jumpy
