#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskgcd/hungarian.hpp"
#include "maskgcd/types.hpp"

namespace maskgcd {

// Masks with area < area_threshold are "small". Every small unlabeled mask takes the label
// and confidence of its nearest (feature L2) non-small mask in the same image, or across
// the dataset when its image has none. Labeled masks keep their ground truth.
LabelState fill_small_masks(const DiscoveryInstance& instance, const LabelState& state,
                            int64_t area_threshold);

// Rasterizes one image: each pixel takes the label of its unique covering mask.
// Throws OVERLAP / COVERAGE_GAP naming a pixel, PARAM_ERROR for an unusable label.
SegmentationMap assemble_map(const ImageInfo& image, std::span<const RleMask> masks,
                             std::span<const int32_t> labels);

// One map per image listed in the instance, in image order.
std::vector<SegmentationMap> assemble_maps(const DiscoveryInstance& instance, const LabelState& state);

enum class MatchStrategy { kHungarian, kGreedy };

// Dataset-level pixel confusion between ground-truth classes and predicted labels.
// Ground-truth classes are base ids then gt_novel_ids; predicted slots are base ids then
// pred_novel_ids plus one "other" slot. VOID and unknown ground-truth pixels are skipped.
class EvalAccumulator {
 public:
  EvalAccumulator(int32_t k_base, std::vector<uint16_t> gt_novel_ids, std::vector<uint16_t> pred_novel_ids);

  // Throws SHAPE_MISMATCH when the rasters differ in size.
  void add(const SegmentationMap& pred, const SegmentationMap& gt);
  // Counts combine by addition; both sides must share the class layout.
  void merge(const EvalAccumulator& other);

  int32_t k_base() const { return k_base_; }
  const std::vector<uint16_t>& gt_novel_ids() const { return gt_novel_; }
  const std::vector<uint16_t>& pred_novel_ids() const { return pred_novel_; }
  size_t gt_classes() const { return gt_novel_.size() + static_cast<size_t>(k_base_); }
  size_t pred_slots() const { return pred_novel_.size() + static_cast<size_t>(k_base_) + 1; }
  uint64_t count(size_t gt_class, size_t pred_slot) const { return confusion_[gt_class * pred_slots() + pred_slot]; }
  uint64_t ignored_pixels() const { return ignored_; }

  bool operator==(const EvalAccumulator&) const = default;

 private:
  int32_t k_base_;
  std::vector<uint16_t> gt_novel_;
  std::vector<uint16_t> pred_novel_;
  std::vector<int32_t> gt_slot_;    // raster value -> gt class index, -1 unknown
  std::vector<int32_t> pred_slot_;  // raster value -> pred slot, "other" by default
  std::vector<uint64_t> confusion_;
  uint64_t ignored_ = 0;
};

struct NovelMatch {
  uint16_t predicted = 0;
  uint16_t ground_truth = 0;
  double iou = 0.0;
};

struct EvalReport {
  // Indexed like EvalAccumulator ground-truth classes; nullopt for classes without pixels.
  std::vector<std::optional<double>> per_class_iou;
  std::vector<uint16_t> class_ids;
  double miou_base = 0.0;
  double miou_novel = 0.0;
  double miou_avg = 0.0;
  std::vector<NovelMatch> matching;
  std::vector<uint16_t> unmatched_predicted;
  uint64_t ignored_pixels = 0;
};

EvalReport finalize(const EvalAccumulator& acc, MatchStrategy strategy = MatchStrategy::kHungarian);

// Pairs maps by image_id; every prediction needs a ground truth of the same shape.
EvalReport evaluate(std::span<const SegmentationMap> pred_maps, std::span<const SegmentationMap> gt_maps,
                    int32_t k_base, std::vector<uint16_t> gt_novel_ids, std::vector<uint16_t> pred_novel_ids,
                    MatchStrategy strategy = MatchStrategy::kHungarian);

nlohmann::ordered_json to_json(const EvalReport& report);

}  // namespace maskgcd
