#include "aeanet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "aeanet/error.hpp"

namespace aeanet {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

Image load_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("png: cannot read " + path.string() + ": " + img.message);
  }
  if (img.format & (PNG_FORMAT_FLAG_COLOR | PNG_FORMAT_FLAG_COLORMAP)) {
    png_image_free(&img);
    throw IoError("png: unsupported: non-grayscale (" + path.string() + ")");
  }
  const bool wide = (img.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  img.format = wide ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
  Image out(img.height, img.width);
  if (wide) {
    std::vector<png_uint_16> buf(PNG_IMAGE_SIZE(img) / sizeof(png_uint_16));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
      throw IoError("png: decode failed for " + path.string() + ": " + img.message);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = buf[i] / 65535.0;
  } else {
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
      throw IoError("png: decode failed for " + path.string() + ": " + img.message);
    }
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = buf[i] / 255.0;
  }
  return out;
}

void save_png(const Image& image, const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(image.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = quantize_8bit(image.pixels[i]);
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr)) {
    throw IoError("png: cannot write " + path.string() + ": " + img.message);
  }
}

// Skips whitespace and '#' comments in a PNM header.
void skip_pnm_space(std::istream& in) {
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_pnm_number(std::istream& in, const std::string& what) {
  skip_pnm_space(in);
  long long v = -1;
  if (!(in >> v) || v < 0) throw IoError("pgm: malformed header (" + what + ")");
  return static_cast<std::size_t>(v);
}

Image load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("pgm: cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P') throw IoError("pgm: not a netpbm file: " + path.string());
  if (magic[1] == '3' || magic[1] == '6') {
    throw IoError("pgm: unsupported: non-grayscale (" + path.string() + ")");
  }
  if (magic[1] != '2' && magic[1] != '5') {
    throw IoError(std::string("pgm: unsupported netpbm variant P") + magic[1]);
  }
  const std::size_t w = read_pnm_number(in, "width");
  const std::size_t h = read_pnm_number(in, "height");
  const std::size_t maxval = read_pnm_number(in, "maxval");
  if (maxval == 0 || maxval > 65535) throw IoError("pgm: invalid maxval");
  Image out(h, w);
  if (magic[1] == '2') {
    for (double& p : out.pixels) p = static_cast<double>(read_pnm_number(in, "sample")) / maxval;
    return out;
  }
  in.get();  // single whitespace before raster
  const bool wide = maxval > 255;
  std::vector<unsigned char> raw(out.size() * (wide ? 2 : 1));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw IoError("pgm: truncated raster");
  for (std::size_t i = 0; i < out.size(); ++i) {
    unsigned v = wide ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
    out.pixels[i] = static_cast<double>(v) / maxval;
  }
  return out;
}

void save_pgm(const Image& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = quantize_8bit(image.pixels[i]);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("pgm: write failed for " + path.string());
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

}  // namespace

std::uint8_t quantize_8bit(double value) {
  const double v = std::clamp(value, 0.0, 1.0) * 255.0;
  return static_cast<std::uint8_t>(std::round(v));
}

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("image not found: " + path.string());
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".pgm" || ext == ".pnm" || ext == ".ppm") return load_pgm(path);
  throw IoError("unsupported image format '" + ext + "' (expected png or pgm)");
}

void save_image(const Image& image, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return save_png(image, path);
  if (ext == ".pgm") return save_pgm(image, path);
  throw IoError("unsupported image format '" + ext + "' (expected png or pgm)");
}

double keys_cubic(double t, double a) {
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

Image bicubic_upsample(const Image& image, int factor) {
  if (factor != 2) throw ConfigError("bicubic_upsample: only factor 2 is supported");
  if (image.size() == 0) return Image(0, 0);
  const std::size_t oh = image.height * 2, ow = image.width * 2;

  // Per output coordinate: four source taps and weights (separable).
  struct Taps {
    std::size_t index[4];
    double weight[4];
  };
  auto taps_for = [](std::size_t n_out, std::size_t n_in) {
    std::vector<Taps> taps(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      const double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
      const auto base = static_cast<std::ptrdiff_t>(std::floor(src));
      const double frac = src - static_cast<double>(base);
      for (int k = 0; k < 4; ++k) {
        taps[o].index[k] = clamp_index(base - 1 + k, n_in);
        taps[o].weight[k] = keys_cubic(frac - (k - 1));
      }
    }
    return taps;
  };
  const std::vector<Taps> ty = taps_for(oh, image.height);
  const std::vector<Taps> tx = taps_for(ow, image.width);

  Image rows(image.height, ow);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += tx[x].weight[k] * image.at(y, tx[x].index[k]);
      rows.at(y, x) = acc;
    }
  }
  Image out(oh, ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += ty[y].weight[k] * rows.at(ty[y].index[k], x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

Image downsample_2x(const Image& image) {
  Image out(image.height / 2, image.width / 2);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      out.at(y, x) = 0.25 * (image.at(2 * y, 2 * x) + image.at(2 * y, 2 * x + 1) +
                             image.at(2 * y + 1, 2 * x) + image.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  if (sigma <= 0.0 || image.size() == 0) return image;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : kernel) v /= total;

  Image tmp(image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               image.at(y, clamp_index(static_cast<std::ptrdiff_t>(x) + i, image.width));
      }
      tmp.at(y, x) = acc;
    }
  }
  Image out(image.height, image.width);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp.at(clamp_index(static_cast<std::ptrdiff_t>(y) + i, image.height), x);
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, std::size_t height, std::size_t width) {
  if (image.size() == 0) throw DimensionError("resize_bilinear: empty image");
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      out.at(y, x) = (1 - wy) * ((1 - wx) * image.at(y0, x0) + wx * image.at(y0, x1)) +
                     wy * ((1 - wx) * image.at(y1, x0) + wx * image.at(y1, x1));
    }
  }
  return out;
}

Image crop(const Image& image, std::size_t top, std::size_t left, std::size_t height,
           std::size_t width) {
  if (top + height > image.height || left + width > image.width) {
    throw DimensionError("crop window exceeds image bounds");
  }
  Image out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>((top + y) * image.width + left),
                width, out.pixels.begin() + static_cast<std::ptrdiff_t>(y * width));
  }
  return out;
}

Image clamp_unit(Image image) {
  for (double& p : image.pixels) p = std::clamp(p, 0.0, 1.0);
  return image;
}

Image normalize_min_max(Image image) {
  if (image.size() == 0) return image;
  auto [lo, hi] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  const double mn = *lo, range = *hi - *lo;
  for (double& p : image.pixels) p = range > 0.0 ? (p - mn) / range : 0.0;
  return image;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i = ((i % period) + period) % period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

Image reflect_pad(const Image& image, std::size_t height, std::size_t width) {
  if (height < image.height || width < image.width) {
    throw DimensionError("reflect_pad: target smaller than image");
  }
  Image out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y), image.height);
    for (std::size_t x = 0; x < width; ++x) {
      out.at(y, x) = image.at(sy, reflect_index(static_cast<std::ptrdiff_t>(x), image.width));
    }
  }
  return out;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  std::vector<T> v(image.pixels.begin(), image.pixels.end());
  return Tensor<T>({image.height, image.width, 1}, std::move(v));
}

template <typename T>
Image tensor_to_image(const Tensor<T>& tensor) {
  if (tensor.rank() != 3 || tensor.dim(2) != 1) {
    throw DimensionError("tensor_to_image: expected [h x w x 1], got " +
                         shape_to_string(tensor.shape()));
  }
  Image out(tensor.dim(0), tensor.dim(1));
  for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = static_cast<double>(tensor[i]);
  return out;
}

template Tensor<float> image_to_tensor(const Image&);
template Tensor<double> image_to_tensor(const Image&);
template Image tensor_to_image(const Tensor<float>&);
template Image tensor_to_image(const Tensor<double>&);

}  // namespace aeanet
