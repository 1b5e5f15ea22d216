#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "aeanet/tensor.hpp"

namespace aeanet {

// Single-channel image, row-major, intensities nominally in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool same_shape(const Image& other) const {
    return height == other.height && width == other.width;
  }
};

// 8/16-bit grayscale PNG or PGM (P2/P5), scaled to [0, 1]. Colour inputs raise
// IoError("unsupported: non-grayscale").
Image load_image(const std::filesystem::path& path);
// Writes 8-bit grayscale (PNG or PGM by extension); values are clamped to
// [0, 1] and rounded half away from zero.
void save_image(const Image& image, const std::filesystem::path& path);
std::uint8_t quantize_8bit(double value);

// Keys cubic convolution kernel.
double keys_cubic(double t, double a = -0.5);
// Bicubic (a = -0.5) magnification with clamped edges and pixel-centre
// alignment. Only factor 2 is supported.
Image bicubic_upsample(const Image& image, int factor);
// 2x2 box average; odd trailing rows/columns are dropped.
Image downsample_2x(const Image& image);
// Separable Gaussian blur, kernel radius ceil(3 sigma), clamped edges.
// sigma <= 0 returns the input unchanged.
Image gaussian_blur(const Image& image, double sigma);
Image resize_bilinear(const Image& image, std::size_t height, std::size_t width);
Image crop(const Image& image, std::size_t top, std::size_t left, std::size_t height,
           std::size_t width);
Image clamp_unit(Image image);
// Min-max normalisation to [0, 1]; constant images map to all zeros.
Image normalize_min_max(Image image);

// Mirror index (edge pixel not repeated) into [0, n).
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);
Image reflect_pad(const Image& image, std::size_t height, std::size_t width);

// [h x w x 1] tensor views of an image.
template <typename T>
Tensor<T> image_to_tensor(const Image& image);
template <typename T>
Image tensor_to_image(const Tensor<T>& tensor);

}  // namespace aeanet
