#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "aeanet/image.hpp"

namespace aeanet {

// Registered pair: bicubic-upsampled LR and HR, equal shapes, values in [0, 1].
struct ImagePair {
  std::string id;
  Image lr_up;
  Image hr;

  void validate() const;
};

struct PatchSplit {
  static constexpr std::size_t kRows = 3;
  static constexpr std::size_t kCols = 4;
  std::vector<ImagePair> train_patches;  // columns 1-3, row-major
  std::vector<ImagePair> test_patches;   // column 4, top to bottom
  // Region kept after centre-cropping to grid-divisible extents.
  std::size_t crop_top = 0, crop_left = 0, crop_height = 0, crop_width = 0;
};

// 3 rows x 4 columns of equal patches. Non-divisible extents are centre-cropped
// to the largest divisible size first.
PatchSplit split_3x4(const ImagePair& pair);

struct SynthOptions {
  std::size_t count = 32;
  std::uint64_t seed = 0;
  std::size_t size = 96;
  double noise_sigma = 0.02;
  double blur_sigma = 1.0;

  void validate() const;
};

// Clean scene: bright elliptical clusters on a dark textured background.
Image synth_scene(std::size_t size, std::uint64_t seed);
// hr = clean + noise; lr_up = bicubic(downsample(blur(clean))) + independent
// noise; both clamped to [0, 1]. Pair i depends only on (seed, i).
std::vector<ImagePair> synth_generate(const SynthOptions& options);

// Directory layout: <root>/<id>/lr.png, <root>/<id>/hr.png and
// <root>/manifest.txt (key-value lines with pair ids and the split protocol).
void write_dataset(const std::vector<ImagePair>& pairs, const std::filesystem::path& root);
std::vector<ImagePair> read_dataset(const std::filesystem::path& root);

}  // namespace aeanet
