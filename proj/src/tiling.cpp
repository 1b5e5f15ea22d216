#include "aeanet/tiling.hpp"

#include "aeanet/error.hpp"

namespace aeanet {

PadMode parse_pad_mode(const std::string& text) {
  if (text == "reflect") return PadMode::reflect;
  if (text == "zero") return PadMode::zero;
  throw ConfigError("unknown pad mode '" + text + "' (expected reflect|zero)");
}

Image tile_and_stitch(const Image& image, const ImageFunction& fn, std::size_t patch_size,
                      PadMode pad_mode, TilingStats* stats) {
  if (patch_size == 0 || patch_size % 4 != 0) {
    throw ConfigError("patch size " + std::to_string(patch_size) + " is not a positive multiple of 4");
  }
  if (image.size() == 0) throw DimensionError("tile_and_stitch: empty image");
  const std::size_t ty = (image.height + patch_size - 1) / patch_size;
  const std::size_t tx = (image.width + patch_size - 1) / patch_size;
  Image padded;
  if (pad_mode == PadMode::reflect) {
    padded = reflect_pad(image, ty * patch_size, tx * patch_size);
  } else {
    padded = Image(ty * patch_size, tx * patch_size);
    for (std::size_t y = 0; y < image.height; ++y) {
      for (std::size_t x = 0; x < image.width; ++x) padded.at(y, x) = image.at(y, x);
    }
  }
  Image out(image.height, image.width);
  for (std::size_t i = 0; i < ty; ++i) {
    for (std::size_t j = 0; j < tx; ++j) {
      const Image tile = fn(crop(padded, i * patch_size, j * patch_size, patch_size, patch_size));
      if (tile.height != patch_size || tile.width != patch_size) {
        throw DimensionError("tile_and_stitch: model changed the tile size");
      }
      const std::size_t y1 = std::min(image.height, (i + 1) * patch_size);
      const std::size_t x1 = std::min(image.width, (j + 1) * patch_size);
      for (std::size_t y = i * patch_size; y < y1; ++y) {
        for (std::size_t x = j * patch_size; x < x1; ++x) {
          out.at(y, x) = tile.at(y - i * patch_size, x - j * patch_size);
        }
      }
    }
  }
  if (stats) *stats = {ty, tx};
  return out;
}

}  // namespace aeanet
