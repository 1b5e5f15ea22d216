#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "aeanet/image.hpp"

namespace aeanet {

enum class PadMode { reflect, zero };
PadMode parse_pad_mode(const std::string& text);

using ImageFunction = std::function<Image(const Image&)>;

struct TilingStats {
  std::size_t tiles_y = 0;
  std::size_t tiles_x = 0;
  std::size_t tiles() const { return tiles_y * tiles_x; }
};

// Non-overlapping patch_size x patch_size tiles; ragged bottom/right tiles are
// padded, and every output pixel comes from exactly one tile.
Image tile_and_stitch(const Image& image, const ImageFunction& fn, std::size_t patch_size,
                      PadMode pad_mode = PadMode::reflect, TilingStats* stats = nullptr);

}  // namespace aeanet
