#pragma once

#include <cstdint>
#include <vector>

namespace maskgcd {

// Binary raster stored row-major; value 0 or 1.
struct Bitmap {
  int32_t height = 0;
  int32_t width = 0;
  std::vector<uint8_t> pixels;

  Bitmap() = default;
  Bitmap(int32_t h, int32_t w) : height(h), width(w), pixels(static_cast<size_t>(h) * w, 0) {}

  uint8_t at(int32_t y, int32_t x) const { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int32_t y, int32_t x) { return pixels[static_cast<size_t>(y) * width + x]; }

  // Builds a bitmap from a column-major (Fortran-order) flat vector.
  static Bitmap from_column_major(int32_t h, int32_t w, const std::vector<uint8_t>& flat);

  bool operator==(const Bitmap&) const = default;
};

// Uncompressed COCO-style RLE: column-major runs, the first run counts zeros.
struct RleMask {
  int32_t height = 0;
  int32_t width = 0;
  std::vector<uint32_t> counts;

  uint64_t area() const;
  bool operator==(const RleMask&) const = default;
};

struct TightBox {
  int32_t x = 0, y = 0, w = 0, h = 0;
  bool operator==(const TightBox&) const = default;
};

RleMask rle_encode(const Bitmap& bitmap);

// Throws Error(kSumMismatch) when counts do not total height * width.
Bitmap rle_decode(const RleMask& rle);

// Tight bounding box of the foreground; all zeros for an empty mask.
TightBox rle_bbox(const RleMask& rle);

// Calls fn(y, x) for every foreground pixel, column by column.
template <typename Fn>
void for_each_pixel(const RleMask& rle, Fn&& fn) {
  uint64_t pos = 0;
  bool value = false;
  const uint64_t h = static_cast<uint64_t>(rle.height);
  for (uint32_t run : rle.counts) {
    if (value) {
      for (uint64_t p = pos; p < pos + run; ++p) {
        fn(static_cast<int32_t>(p % h), static_cast<int32_t>(p / h));
      }
    }
    pos += run;
    value = !value;
  }
}

}  // namespace maskgcd
