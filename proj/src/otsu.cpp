#include "aeanet/otsu.hpp"

#include <algorithm>
#include <cmath>

#include "aeanet/error.hpp"

namespace aeanet {

int otsu_bin(double value) {
  return static_cast<int>(std::lround(std::clamp(value, 0.0, 1.0) * 255.0));
}

std::array<std::uint64_t, 256> histogram_256(const Image& image) {
  std::array<std::uint64_t, 256> h{};
  for (double v : image.pixels) ++h[static_cast<std::size_t>(otsu_bin(v))];
  return h;
}

OtsuResult otsu_threshold(const Image& image) {
  if (image.size() == 0) throw DegenerateError("otsu_threshold: empty image");
  const auto hist = histogram_256(image);
  // Integer statistics keep the comparison exact: the between-class variance
  // is proportional to (N*S0 - n0*S)^2 / (n0*n1).
  const std::int64_t n = static_cast<std::int64_t>(image.size());
  std::int64_t total_sum = 0;
  for (int i = 0; i < 256; ++i) total_sum += i * static_cast<std::int64_t>(hist[i]);

  // Up to 2^16 pixels the scores are compared exactly by cross-multiplying in
  // 128-bit integers; larger images fall back to long double.
  const bool exact = n <= (1 << 16);
  std::int64_t n0 = 0, s0 = 0;
  bool found = false;
  __int128 best_num = 0, best_den = 1;
  long double best = -1;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += static_cast<std::int64_t>(hist[t]);
    s0 += t * static_cast<std::int64_t>(hist[t]);
    const std::int64_t n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const __int128 diff = static_cast<__int128>(n) * s0 - static_cast<__int128>(n0) * total_sum;
    const __int128 num = diff * diff, den = static_cast<__int128>(n0) * n1;
    bool better;
    if (exact) {
      better = !found || num * best_den > best_num * den;
    } else {
      const long double score = static_cast<long double>(num) / static_cast<long double>(den);
      better = !found || score > best;
      if (better) best = score;
    }
    if (better) {
      best_num = num;
      best_den = den;
      best_t = t;
      found = true;
    }
  }
  if (!found) throw DegenerateError("otsu_threshold: image is constant (single histogram bin)");

  OtsuResult r;
  r.threshold = best_t;
  r.threshold_value = best_t / 255.0;
  r.mask.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    r.mask[i] = otsu_bin(image.pixels[i]) > best_t ? 1 : 0;
    r.foreground += r.mask[i];
  }
  return r;
}

}  // namespace aeanet
