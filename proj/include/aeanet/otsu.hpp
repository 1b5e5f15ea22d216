#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "aeanet/image.hpp"

namespace aeanet {

struct OtsuResult {
  // Bin index t*: pixels with bin > t* are foreground (the brighter class).
  int threshold = 0;
  double threshold_value = 0.0;  // t* / 255
  std::vector<std::uint8_t> mask;
  std::size_t foreground = 0;
};

// Histogram bin of an intensity: round(clamp(v) * 255).
int otsu_bin(double value);
std::array<std::uint64_t, 256> histogram_256(const Image& image);

// Maximises between-class variance over the 256-bin histogram; ties keep the
// lowest threshold. Raises DegenerateError when all pixels share one bin.
OtsuResult otsu_threshold(const Image& image);

}  // namespace aeanet
