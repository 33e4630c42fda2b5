#include "maskgcd/rle.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "maskgcd/error.hpp"

namespace maskgcd {

Bitmap Bitmap::from_column_major(int32_t h, int32_t w, const std::vector<uint8_t>& flat) {
  Bitmap b(h, w);
  for (int32_t x = 0; x < w; ++x) {
    for (int32_t y = 0; y < h; ++y) {
      b.at(y, x) = flat[static_cast<size_t>(x) * h + y] ? 1 : 0;
    }
  }
  return b;
}

uint64_t RleMask::area() const {
  uint64_t a = 0;
  for (size_t i = 1; i < counts.size(); i += 2) a += counts[i];
  return a;
}

RleMask rle_encode(const Bitmap& bitmap) {
  RleMask rle;
  rle.height = bitmap.height;
  rle.width = bitmap.width;
  uint8_t current = 0;
  uint32_t run = 0;
  for (int32_t x = 0; x < bitmap.width; ++x) {
    for (int32_t y = 0; y < bitmap.height; ++y) {
      const uint8_t v = bitmap.at(y, x) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

Bitmap rle_decode(const RleMask& rle) {
  const uint64_t total = std::accumulate(rle.counts.begin(), rle.counts.end(), uint64_t{0});
  const uint64_t expected = static_cast<uint64_t>(rle.height) * static_cast<uint64_t>(rle.width);
  if (total != expected) {
    throw Error(ErrorCode::kSumMismatch, "counts total " + std::to_string(total) + " != " +
                                             std::to_string(rle.height) + "x" +
                                             std::to_string(rle.width));
  }
  Bitmap b(rle.height, rle.width);
  for_each_pixel(rle, [&](int32_t y, int32_t x) { b.at(y, x) = 1; });
  return b;
}

TightBox rle_bbox(const RleMask& rle) {
  int32_t x0 = std::numeric_limits<int32_t>::max(), y0 = x0;
  int32_t x1 = -1, y1 = -1;
  uint64_t pos = 0;
  bool value = false;
  const uint64_t h = static_cast<uint64_t>(rle.height);
  for (uint32_t run : rle.counts) {
    if (value && run > 0) {
      const uint64_t first = pos, last = pos + run - 1;
      const auto cx0 = static_cast<int32_t>(first / h), cx1 = static_cast<int32_t>(last / h);
      x0 = std::min(x0, cx0);
      x1 = std::max(x1, cx1);
      if (cx0 == cx1) {
        y0 = std::min(y0, static_cast<int32_t>(first % h));
        y1 = std::max(y1, static_cast<int32_t>(last % h));
      } else {
        // Crossing a column boundary touches both the last and the first row.
        y0 = 0;
        y1 = rle.height - 1;
      }
    }
    pos += run;
    value = !value;
  }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace maskgcd
