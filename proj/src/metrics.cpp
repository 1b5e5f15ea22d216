#include "aeanet/metrics.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "aeanet/error.hpp"
#include "aeanet/otsu.hpp"

namespace aeanet {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shapes differ (" + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
  }
  if (a.size() == 0) throw DimensionError(std::string(what) + ": empty image");
}

double psnr_from_mse(double mse, double peak) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable filtering: output (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::array<double, kWin>& g) {
  const std::size_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> tmp(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * src[y * w + x + k];
      tmp[y * ow + x] = s;
    }
  }
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
  require_same(a, b, "psnr");
  double sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    sum += d * d;
  }
  return psnr_from_mse(sum / static_cast<double>(a.size()), peak);
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b, "ssim");
  if (a.height < kWin || a.width < kWin) {
    throw UsageError("ssim needs images of at least 11x11, got " + std::to_string(a.height) + "x" +
                     std::to_string(a.width));
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const std::size_t h = a.height, w = a.width, n = a.size();
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.pixels[i] * a.pixels[i];
    bb[i] = b.pixels[i] * b.pixels[i];
    ab[i] = a.pixels[i] * b.pixels[i];
  }
  const auto mu_a = filter_valid(a.pixels, h, w, g), mu_b = filter_valid(b.pixels, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g),
             e_ab = filter_valid(ab, h, w, g);
  double total = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

DeltaMetrics delta_metrics(const Image& pred, const Image& hr, const Image& lr_up) {
  return {psnr(pred, hr) - psnr(lr_up, hr), ssim(pred, hr) - ssim(lr_up, hr)};
}

std::optional<double> masked_psnr(const Image& a, const Image& b,
                                  const std::vector<std::uint8_t>& mask, bool selected,
                                  double peak) {
  require_same(a, b, "masked_psnr");
  if (mask.size() != a.size()) throw DimensionError("masked_psnr: mask size differs from image");
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((mask[i] != 0) != selected) continue;
    const double d = a.pixels[i] - b.pixels[i];
    sum += d * d;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return psnr_from_mse(sum / static_cast<double>(count), peak);
}

RegionDelta region_psnr(const Image& pred, const Image& hr, const Image& lr_up,
                        const std::vector<std::uint8_t>& mask) {
  RegionDelta r;
  for (bool fg : {true, false}) {
    const auto p = masked_psnr(pred, hr, mask, fg), l = masked_psnr(lr_up, hr, mask, fg);
    std::optional<double> d;
    if (p && l) d = *p - *l;
    (fg ? r.foreground : r.background) = d;
  }
  return r;
}

PatchMetrics evaluate_patch(const std::string& id, const Image& pred, const Image& hr,
                            const Image& lr_up) {
  PatchMetrics m;
  m.id = id;
  m.psnr = psnr(pred, hr);
  m.ssim = ssim(pred, hr);
  const DeltaMetrics d = delta_metrics(pred, hr, lr_up);
  m.delta_psnr = d.delta_psnr;
  m.delta_ssim = d.delta_ssim;
  try {
    const RegionDelta r = region_psnr(pred, hr, lr_up, otsu_threshold(hr).mask);
    m.fg_delta_psnr = r.foreground;
    m.bg_delta_psnr = r.background;
  } catch (const DegenerateError&) {
  }
  return m;
}

PatchMetrics MetricsReport::aggregate() const {
  PatchMetrics mean;
  mean.id = "mean";
  if (patches.empty()) return mean;
  double fg = 0, bg = 0;
  std::size_t nfg = 0, nbg = 0;
  for (const PatchMetrics& p : patches) {
    mean.psnr += p.psnr;
    mean.ssim += p.ssim;
    mean.delta_psnr += p.delta_psnr;
    mean.delta_ssim += p.delta_ssim;
    if (p.fg_delta_psnr) fg += *p.fg_delta_psnr, ++nfg;
    if (p.bg_delta_psnr) bg += *p.bg_delta_psnr, ++nbg;
  }
  const double n = static_cast<double>(patches.size());
  mean.psnr /= n;
  mean.ssim /= n;
  mean.delta_psnr /= n;
  mean.delta_ssim /= n;
  if (nfg) mean.fg_delta_psnr = fg / static_cast<double>(nfg);
  if (nbg) mean.bg_delta_psnr = bg / static_cast<double>(nbg);
  return mean;
}

std::string format_metric(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(6) << value;
  return ss.str();
}

std::string format_metric(const std::optional<double>& value) {
  return value ? format_metric(*value) : "n/a";
}

const char* MetricsReport::csv_header() {
  return "id,psnr,ssim,delta_psnr,delta_ssim,fg_delta_psnr,bg_delta_psnr";
}

void MetricsReport::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  auto row = [&](const PatchMetrics& p) {
    out << p.id << ',' << format_metric(p.psnr) << ',' << format_metric(p.ssim) << ','
        << format_metric(p.delta_psnr) << ',' << format_metric(p.delta_ssim) << ','
        << format_metric(p.fg_delta_psnr) << ',' << format_metric(p.bg_delta_psnr) << '\n';
  };
  for (const PatchMetrics& p : patches) row(p);
  row(aggregate());
}

void MetricsReport::write_table(std::ostream& out) const {
  out << std::left << std::setw(24) << "patch" << std::right << std::setw(10) << "PSNR"
      << std::setw(9) << "SSIM" << std::setw(10) << "dPSNR" << std::setw(10) << "dSSIM"
      << std::setw(10) << "fg dPSNR" << std::setw(10) << "bg dPSNR" << '\n';
  auto cell = [](const std::optional<double>& v, int prec) {
    if (!v) return std::string("n/a");
    if (std::isinf(*v)) return std::string(*v > 0 ? "inf" : "-inf");
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(prec) << *v;
    return ss.str();
  };
  auto row = [&](const PatchMetrics& p) {
    out << std::left << std::setw(24) << p.id << std::right << std::setw(10) << cell(p.psnr, 3)
        << std::setw(9) << cell(p.ssim, 4) << std::setw(10) << cell(p.delta_psnr, 3)
        << std::setw(10) << cell(p.delta_ssim, 4) << std::setw(10) << cell(p.fg_delta_psnr, 3)
        << std::setw(10) << cell(p.bg_delta_psnr, 3) << '\n';
  };
  for (const PatchMetrics& p : patches) row(p);
  row(aggregate());
}

}  // namespace aeanet
