#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskgcd/rle.hpp"

namespace maskgcd {

// Label value of a mask that no base class has claimed (a novel-class candidate).
inline constexpr int32_t kNovelPending = -1;
// Raster value for pixels excluded from evaluation.
inline constexpr uint16_t kVoid = 65535;

enum class Split { kLabeled, kUnlabeled };

struct BBox {
  int32_t x = 0, y = 0, w = 0, h = 0;
  bool operator==(const BBox&) const = default;
};

struct MaskRecord {
  int64_t mask_id = 0;
  int64_t image_id = 0;
  int64_t area = 1;
  BBox bbox;
  std::optional<int32_t> label;
  Split split = Split::kUnlabeled;

  bool operator==(const MaskRecord&) const = default;
};

struct ImageInfo {
  int64_t image_id = 0;
  int32_t height = 0;
  int32_t width = 0;
  bool operator==(const ImageInfo&) const = default;
};

// Dense row-major N x D matrix of mask features.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(size_t rows, size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
  FeatureMatrix(size_t rows, size_t cols, std::vector<float> data);

  size_t rows() const noexcept { return rows_; }
  size_t cols() const noexcept { return cols_; }

  std::span<const float> row(size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<float> row(size_t i) { return {data_.data() + i * cols_, cols_}; }

  const std::vector<float>& data() const noexcept { return data_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<float> data_;
};

struct DiscoveryInstance {
  std::vector<MaskRecord> masks;
  FeatureMatrix features;
  // Aligned with masks; empty when no geometry file was supplied.
  std::vector<std::optional<RleMask>> geometry;
  int32_t k_base = 0;
  int32_t k_novel = 0;
  std::vector<ImageInfo> images;

  size_t size() const noexcept { return masks.size(); }
  bool has_geometry(size_t i) const { return i < geometry.size() && geometry[i].has_value(); }
  double weight(size_t i) const { return static_cast<double>(masks[i].area); }
  bool is_labeled(size_t i) const { return masks[i].split == Split::kLabeled; }

  // Copy restricted to the given mask indices, in the given order.
  DiscoveryInstance subset(std::span<const size_t> indices) const;

  bool operator==(const DiscoveryInstance&) const = default;
};

// Per-mask pseudo-label and confidence evolved by label propagation.
struct LabelState {
  std::vector<int32_t> label;
  std::vector<double> confidence;

  size_t size() const noexcept { return label.size(); }

  // Labeled masks carry their ground truth with confidence 1; the rest are pending with 0.
  static LabelState initial(const DiscoveryInstance& instance);

  bool operator==(const LabelState&) const = default;
};

struct SegmentationMap {
  int64_t image_id = 0;
  int32_t height = 0;
  int32_t width = 0;
  std::vector<uint16_t> labels;  // row-major

  SegmentationMap() = default;
  SegmentationMap(int64_t id, int32_t h, int32_t w, uint16_t fill = kVoid)
      : image_id(id), height(h), width(w), labels(static_cast<size_t>(h) * w, fill) {}

  uint16_t at(int32_t y, int32_t x) const { return labels[static_cast<size_t>(y) * width + x]; }
  uint16_t& at(int32_t y, int32_t x) { return labels[static_cast<size_t>(y) * width + x]; }

  bool operator==(const SegmentationMap&) const = default;
};

struct Violation {
  enum class Kind {
    kCountMismatch,
    kNonFiniteFeature,
    kDuplicateMaskId,
    kLabelSplitMismatch,
    kLabelOutOfRange,
    kAreaMismatch,
    kBBoxMismatch,
    kGeometryShape,
    kUnknownImage,
    kOverlap,
    kCoverageGap,
  };
  Kind kind;
  std::string message;
  std::vector<int64_t> mask_ids;
  std::optional<int64_t> image_id;
};

using ValidationReport = std::vector<Violation>;

// Lists every invariant violation; an empty report means the instance is well formed.
ValidationReport validate_instance(const DiscoveryInstance& instance);

inline bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace maskgcd

namespace maskgcd {

// 8-bit RGB raster, interleaved row-major.
struct RgbImage {
  int32_t height = 0;
  int32_t width = 0;
  std::vector<uint8_t> data;

  RgbImage() = default;
  RgbImage(int32_t h, int32_t w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0) {}

  const uint8_t* pixel(int32_t y, int32_t x) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }
  uint8_t* pixel(int32_t y, int32_t x) {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }

  bool operator==(const RgbImage&) const = default;
};

}  // namespace maskgcd
