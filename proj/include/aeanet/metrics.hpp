#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "aeanet/image.hpp"

namespace aeanet {

// 10 log10(peak^2 / MSE); +inf for identical images.
double psnr(const Image& a, const Image& b, double peak = 1.0);
// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03, range
// 1, averaged over windows fully inside the image.
double ssim(const Image& a, const Image& b);

struct DeltaMetrics {
  double delta_psnr = 0.0;
  double delta_ssim = 0.0;
};
DeltaMetrics delta_metrics(const Image& pred, const Image& hr, const Image& lr_up);

// PSNR over the pixels where mask == selected; empty when there are none.
std::optional<double> masked_psnr(const Image& a, const Image& b,
                                  const std::vector<std::uint8_t>& mask, bool selected,
                                  double peak = 1.0);

struct RegionDelta {
  std::optional<double> foreground;  // empty region -> n/a
  std::optional<double> background;
};
RegionDelta region_psnr(const Image& pred, const Image& hr, const Image& lr_up,
                        const std::vector<std::uint8_t>& mask);

struct PatchMetrics {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double delta_psnr = 0.0;
  double delta_ssim = 0.0;
  std::optional<double> fg_delta_psnr;
  std::optional<double> bg_delta_psnr;
};

// Per-patch metrics with the Otsu mask taken from the HR patch. A constant HR
// patch gets n/a foreground/background entries.
PatchMetrics evaluate_patch(const std::string& id, const Image& pred, const Image& hr,
                            const Image& lr_up);

struct MetricsReport {
  std::vector<PatchMetrics> patches;
  // Arithmetic means; optional entries average over the patches that have them.
  PatchMetrics aggregate() const;

  static const char* csv_header();
  void write_csv(std::ostream& out) const;
  void write_table(std::ostream& out) const;
};

std::string format_metric(double value);
std::string format_metric(const std::optional<double>& value);

}  // namespace aeanet
