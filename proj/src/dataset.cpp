#include "aeanet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "aeanet/config.hpp"
#include "aeanet/error.hpp"
#include "aeanet/random.hpp"

namespace aeanet {

void ImagePair::validate() const {
  if (!lr_up.same_shape(hr)) {
    throw DimensionError("pair '" + id + "': lr " + std::to_string(lr_up.height) + "x" +
                         std::to_string(lr_up.width) + " vs hr " + std::to_string(hr.height) +
                         "x" + std::to_string(hr.width));
  }
  if (hr.size() == 0) throw DimensionError("pair '" + id + "' is empty");
}

PatchSplit split_3x4(const ImagePair& pair) {
  pair.validate();
  const std::size_t rows = PatchSplit::kRows, cols = PatchSplit::kCols;
  if (pair.hr.height < rows || pair.hr.width < cols) {
    throw UsageError("split_3x4: image " + std::to_string(pair.hr.height) + "x" +
                     std::to_string(pair.hr.width) + " is smaller than the 3x4 grid");
  }
  PatchSplit split;
  split.crop_height = pair.hr.height / rows * rows;
  split.crop_width = pair.hr.width / cols * cols;
  split.crop_top = (pair.hr.height - split.crop_height) / 2;
  split.crop_left = (pair.hr.width - split.crop_width) / 2;
  const std::size_t ph = split.crop_height / rows, pw = split.crop_width / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t top = split.crop_top + r * ph, left = split.crop_left + c * pw;
      ImagePair p{pair.id + "/r" + std::to_string(r) + "c" + std::to_string(c),
                  crop(pair.lr_up, top, left, ph, pw), crop(pair.hr, top, left, ph, pw)};
      (c + 1 < cols ? split.train_patches : split.test_patches).push_back(std::move(p));
    }
  }
  return split;
}

void SynthOptions::validate() const {
  if (size == 0 || size % 4 != 0) throw ConfigError("synthetic image size must be a positive multiple of 4");
  if (count == 0) throw ConfigError("synthetic pair count must be positive");
  if (noise_sigma < 0 || blur_sigma < 0) throw ConfigError("noise and blur sigmas must be >= 0");
}

Image synth_scene(std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  const double n = static_cast<double>(size);
  Image img(size, size);

  // Background: a few low-frequency waves around a dark level.
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves(4);
  for (Wave& w : waves) {
    w = {rng.uniform(1.0, 6.0) / n, rng.uniform(1.0, 6.0) / n,
         rng.uniform(0.0, 2 * std::numbers::pi), rng.uniform(0.01, 0.04)};
  }
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double v = 0.15;
      for (const Wave& w : waves) {
        v += w.amp * std::sin(2 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
      }
      img.at(y, x) = v;
    }
  }

  // Clusters with soft edges.
  const std::size_t clusters = 4 + rng.index(6);
  for (std::size_t k = 0; k < clusters; ++k) {
    const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
    const double ry = rng.uniform(0.03, 0.12) * n, rx = rng.uniform(0.03, 0.12) * n;
    const double theta = rng.uniform(0, std::numbers::pi);
    const double level = rng.uniform(0.55, 0.9);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double u = (dx * ct + dy * st) / rx, v = (-dx * st + dy * ct) / ry;
        const double d = std::sqrt(u * u + v * v);
        const double w = 1.0 / (1.0 + std::exp((d - 1.0) * 8.0));
        img.at(y, x) = std::max(img.at(y, x), img.at(y, x) * (1 - w) + level * w);
      }
    }
  }
  return clamp_unit(std::move(img));
}

std::vector<ImagePair> synth_generate(const SynthOptions& options) {
  options.validate();
  std::vector<ImagePair> pairs(options.count);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < options.count; ++i) {
    const std::uint64_t base = mix_seed(options.seed, i);
    const Image clean = synth_scene(options.size, mix_seed(base, 1));
    Rng noise(mix_seed(base, 2));
    Image hr = clean;
    if (options.noise_sigma > 0) {
      for (double& v : hr.pixels) v += noise.normal(0.0, options.noise_sigma);
    }
    Image lr = bicubic_upsample(downsample_2x(gaussian_blur(clean, options.blur_sigma)), 2);
    if (options.noise_sigma > 0) {
      for (double& v : lr.pixels) v += noise.normal(0.0, options.noise_sigma);
    }
    std::ostringstream id;
    id << "pair_" << std::setfill('0') << std::setw(3) << i;
    pairs[i] = ImagePair{id.str(), clamp_unit(std::move(lr)), clamp_unit(std::move(hr))};
  }
  return pairs;
}

void write_dataset(const std::vector<ImagePair>& pairs, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  KeyValues manifest;
  std::string ids;
  for (const ImagePair& p : pairs) {
    p.validate();
    if (p.id.empty() || p.id.find_first_of("/\\,= ") != std::string::npos) {
      throw UsageError("pair id '" + p.id + "' is not usable as a directory name");
    }
    std::filesystem::create_directories(root / p.id);
    save_image(p.lr_up, root / p.id / "lr.png");
    save_image(p.hr, root / p.id / "hr.png");
    ids += (ids.empty() ? "" : ",") + p.id;
  }
  manifest.set("pairs", ids);
  manifest.set("split.protocol", "3x4");
  manifest.set("split.train", "columns 1-3");
  manifest.set("split.test", "column 4");
  std::ofstream out(root / "manifest.txt");
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << "# paired LR (bicubic-upsampled) / HR dataset\n" << manifest.to_text();
}

std::vector<ImagePair> read_dataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) {
    throw IoError("dataset directory not found: " + root.string());
  }
  std::vector<std::string> ids;
  const auto manifest_path = root / "manifest.txt";
  if (std::filesystem::exists(manifest_path)) {
    std::stringstream ss(KeyValues::load(manifest_path).get_string("pairs", ""));
    for (std::string id; std::getline(ss, id, ',');) {
      if (!id.empty()) ids.push_back(id);
    }
  } else {
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "hr.png") &&
          std::filesystem::exists(entry.path() / "lr.png")) {
        ids.push_back(entry.path().filename().string());
      }
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw IoError("dataset " + root.string() + " contains no pairs");
  std::vector<ImagePair> pairs;
  for (const std::string& id : ids) {
    ImagePair p{id, load_image(root / id / "lr.png"), load_image(root / id / "hr.png")};
    p.validate();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace aeanet
