#include "maskgcd/evaluate.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <map>
#include <string>

#include "maskgcd/error.hpp"

namespace maskgcd {

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (size_t t = 0; t < a.size(); ++t) {
    const double d = static_cast<double>(a[t]) - static_cast<double>(b[t]);
    s += d * d;
  }
  return s;
}

std::string pixel(int32_t y, int32_t x) { return "(" + std::to_string(y) + "," + std::to_string(x) + ")"; }

}  // namespace

LabelState fill_small_masks(const DiscoveryInstance& inst, const LabelState& state, int64_t area_threshold) {
  const size_t n = inst.size();
  if (state.size() != n) throw Error(ErrorCode::kDimensionMismatch, "state size differs from instance");
  std::map<int64_t, std::vector<size_t>> large_by_image;
  std::vector<size_t> large_all, small;
  for (size_t i = 0; i < n; ++i) {
    if (inst.masks[i].area >= area_threshold) {
      large_by_image[inst.masks[i].image_id].push_back(i);
      large_all.push_back(i);
    } else if (!inst.is_labeled(i)) {
      small.push_back(i);
    }
  }
  LabelState out = state;
  if (small.empty()) return out;
  if (large_all.empty()) {
    throw Error(ErrorCode::kInvalidInstance, "every mask is below area_threshold; nothing to fill from");
  }
  const auto ns = static_cast<int64_t>(small.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (int64_t s = 0; s < ns; ++s) {
    const size_t i = small[static_cast<size_t>(s)];
    auto it = large_by_image.find(inst.masks[i].image_id);
    const std::vector<size_t>& pool = it != large_by_image.end() ? it->second : large_all;
    size_t best = pool.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j : pool) {  // pool is ascending, so ties keep the lower index
      const double d = squared_distance(inst.features.row(i), inst.features.row(j));
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    out.label[i] = state.label[best];
    out.confidence[i] = state.confidence[best];
  }
  return out;
}

SegmentationMap assemble_map(const ImageInfo& image, std::span<const RleMask> masks,
                             std::span<const int32_t> labels) {
  if (masks.size() != labels.size()) throw Error(ErrorCode::kParamError, "one label per mask required");
  SegmentationMap map(image.image_id, image.height, image.width);
  std::vector<uint8_t> covered(map.labels.size(), 0);
  for (size_t m = 0; m < masks.size(); ++m) {
    const RleMask& g = masks[m];
    if (g.height != image.height || g.width != image.width) {
      throw Error(ErrorCode::kShapeMismatch, "mask geometry does not match image " + std::to_string(image.image_id));
    }
    if (labels[m] < 0 || labels[m] >= kVoid) {
      throw Error(ErrorCode::kParamError,
                  "mask " + std::to_string(m) + " of image " + std::to_string(image.image_id) +
                      " has no usable label (" + std::to_string(labels[m]) + ")");
    }
    uint64_t total = 0;
    for (uint32_t c : g.counts) total += c;
    if (total != static_cast<uint64_t>(g.height) * static_cast<uint64_t>(g.width)) {
      throw Error(ErrorCode::kSumMismatch, "mask geometry run total differs from image size");
    }
    for_each_pixel(g, [&](int32_t y, int32_t x) {
      const size_t p = static_cast<size_t>(y) * image.width + x;
      if (covered[p]) {
        throw Error(ErrorCode::kOverlap, "image " + std::to_string(image.image_id) + " pixel " + pixel(y, x) +
                                             " covered twice");
      }
      covered[p] = 1;
      map.labels[p] = static_cast<uint16_t>(labels[m]);
    });
  }
  for (size_t p = 0; p < covered.size(); ++p) {
    if (!covered[p]) {
      throw Error(ErrorCode::kCoverageGap,
                  "image " + std::to_string(image.image_id) + " pixel " +
                      pixel(static_cast<int32_t>(p / image.width), static_cast<int32_t>(p % image.width)) +
                      " not covered");
    }
  }
  return map;
}

std::vector<SegmentationMap> assemble_maps(const DiscoveryInstance& inst, const LabelState& state) {
  std::map<int64_t, std::vector<size_t>> by_image;
  for (size_t i = 0; i < inst.size(); ++i) {
    if (inst.has_geometry(i)) by_image[inst.masks[i].image_id].push_back(i);
  }
  std::vector<SegmentationMap> maps(inst.images.size());
  const auto ni = static_cast<int64_t>(inst.images.size());
  // Exceptions may not cross the parallel region; rethrow the first image's after it.
  std::vector<std::exception_ptr> failures(inst.images.size());
#pragma omp parallel for schedule(dynamic)
  for (int64_t k = 0; k < ni; ++k) {
    const ImageInfo& img = inst.images[static_cast<size_t>(k)];
    std::vector<RleMask> geoms;
    std::vector<int32_t> labels;
    if (auto it = by_image.find(img.image_id); it != by_image.end()) {
      for (size_t i : it->second) {
        geoms.push_back(*inst.geometry[i]);
        labels.push_back(state.label[i]);
      }
    }
    try {
      maps[static_cast<size_t>(k)] = assemble_map(img, geoms, labels);
    } catch (...) {
      failures[static_cast<size_t>(k)] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return maps;
}

EvalAccumulator::EvalAccumulator(int32_t k_base, std::vector<uint16_t> gt_novel_ids,
                                 std::vector<uint16_t> pred_novel_ids)
    : k_base_(k_base),
      gt_novel_(std::move(gt_novel_ids)),
      pred_novel_(std::move(pred_novel_ids)),
      gt_slot_(65536, -1),
      pred_slot_(65536, -1) {
  if (k_base_ < 0 || k_base_ >= kVoid) throw Error(ErrorCode::kParamError, "k_base out of range");
  for (int32_t c = 0; c < k_base_; ++c) gt_slot_[static_cast<size_t>(c)] = pred_slot_[static_cast<size_t>(c)] = c;
  for (size_t j = 0; j < gt_novel_.size(); ++j) {
    if (gt_novel_[j] < k_base_ || gt_novel_[j] == kVoid || gt_slot_[gt_novel_[j]] >= 0) {
      throw Error(ErrorCode::kParamError, "ground-truth novel id " + std::to_string(gt_novel_[j]) + " is invalid");
    }
    gt_slot_[gt_novel_[j]] = k_base_ + static_cast<int32_t>(j);
  }
  for (size_t j = 0; j < pred_novel_.size(); ++j) {
    if (pred_novel_[j] < k_base_ || pred_novel_[j] == kVoid || pred_slot_[pred_novel_[j]] >= 0) {
      throw Error(ErrorCode::kParamError, "predicted novel id " + std::to_string(pred_novel_[j]) + " is invalid");
    }
    pred_slot_[pred_novel_[j]] = k_base_ + static_cast<int32_t>(j);
  }
  const auto other = static_cast<int32_t>(pred_slots() - 1);
  for (int32_t& s : pred_slot_) {
    if (s < 0) s = other;
  }
  confusion_.assign(gt_classes() * pred_slots(), 0);
}

void EvalAccumulator::add(const SegmentationMap& pred, const SegmentationMap& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size()) {
    throw Error(ErrorCode::kShapeMismatch, "image " + std::to_string(gt.image_id) + ": prediction " +
                                               std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                                               " vs ground truth " + std::to_string(gt.height) + "x" +
                                               std::to_string(gt.width));
  }
  const size_t slots = pred_slots();
  for (size_t p = 0; p < gt.labels.size(); ++p) {
    const int32_t g = gt_slot_[gt.labels[p]];
    if (g < 0) {
      if (gt.labels[p] != kVoid) ++ignored_;
      continue;
    }
    ++confusion_[static_cast<size_t>(g) * slots + static_cast<size_t>(pred_slot_[pred.labels[p]])];
  }
}

void EvalAccumulator::merge(const EvalAccumulator& other) {
  if (other.k_base_ != k_base_ || other.gt_novel_ != gt_novel_ || other.pred_novel_ != pred_novel_) {
    throw Error(ErrorCode::kShapeMismatch, "cannot merge accumulators with different class layouts");
  }
  for (size_t i = 0; i < confusion_.size(); ++i) confusion_[i] += other.confusion_[i];
  ignored_ += other.ignored_;
}

EvalReport finalize(const EvalAccumulator& acc, MatchStrategy strategy) {
  const size_t G = acc.gt_classes(), P = acc.pred_slots();
  const auto kb = static_cast<size_t>(acc.k_base());
  std::vector<uint64_t> gt_total(G, 0), pred_total(P, 0);
  for (size_t g = 0; g < G; ++g) {
    for (size_t p = 0; p < P; ++p) {
      gt_total[g] += acc.count(g, p);
      pred_total[p] += acc.count(g, p);
    }
  }
  auto iou = [&](size_t g, size_t p) {
    const uint64_t inter = acc.count(g, p);
    const uint64_t uni = gt_total[g] + pred_total[p] - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
  };

  EvalReport r;
  r.ignored_pixels = acc.ignored_pixels();
  r.per_class_iou.assign(G, std::nullopt);
  for (size_t c = 0; c < kb; ++c) r.class_ids.push_back(static_cast<uint16_t>(c));
  for (uint16_t id : acc.gt_novel_ids()) r.class_ids.push_back(id);
  for (size_t c = 0; c < kb; ++c) {
    if (gt_total[c] > 0) r.per_class_iou[c] = iou(c, c);
  }

  const size_t n_pred = acc.pred_novel_ids().size(), n_gt = acc.gt_novel_ids().size();
  ScoreMatrix m(n_pred, n_gt);
  for (size_t a = 0; a < n_pred; ++a) {
    for (size_t b = 0; b < n_gt; ++b) m.at(a, b) = iou(kb + b, kb + a);
  }
  const Matching match = strategy == MatchStrategy::kHungarian ? hungarian_match(m) : greedy_match(m);
  std::vector<bool> pred_matched(n_pred, false);
  for (size_t b = 0; b < n_gt; ++b) {
    if (gt_total[kb + b] > 0) r.per_class_iou[kb + b] = 0.0;
  }
  for (const auto& [a, b] : match.pairs) {
    pred_matched[a] = true;
    r.matching.push_back({acc.pred_novel_ids()[a], acc.gt_novel_ids()[b], m.at(a, b)});
    if (gt_total[kb + b] > 0) r.per_class_iou[kb + b] = m.at(a, b);
  }
  for (size_t a = 0; a < n_pred; ++a) {
    if (!pred_matched[a]) r.unmatched_predicted.push_back(acc.pred_novel_ids()[a]);
  }

  auto mean = [&](size_t lo, size_t hi) {
    double s = 0.0;
    size_t cnt = 0;
    for (size_t c = lo; c < hi; ++c) {
      if (r.per_class_iou[c]) {
        s += *r.per_class_iou[c];
        ++cnt;
      }
    }
    return cnt ? s / static_cast<double>(cnt) : 0.0;
  };
  r.miou_base = mean(0, kb);
  r.miou_novel = mean(kb, G);
  r.miou_avg = mean(0, G);
  return r;
}

EvalReport evaluate(std::span<const SegmentationMap> pred_maps, std::span<const SegmentationMap> gt_maps,
                    int32_t k_base, std::vector<uint16_t> gt_novel_ids, std::vector<uint16_t> pred_novel_ids,
                    MatchStrategy strategy) {
  std::map<int64_t, const SegmentationMap*> gt_by_id;
  for (const auto& g : gt_maps) gt_by_id.emplace(g.image_id, &g);
  EvalAccumulator acc(k_base, std::move(gt_novel_ids), std::move(pred_novel_ids));
  for (const auto& p : pred_maps) {
    auto it = gt_by_id.find(p.image_id);
    if (it == gt_by_id.end()) {
      throw Error(ErrorCode::kShapeMismatch, "no ground-truth map for image " + std::to_string(p.image_id));
    }
    acc.add(p, *it->second);
  }
  return finalize(acc, strategy);
}

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  auto per_class = nlohmann::ordered_json::array();
  for (size_t c = 0; c < r.per_class_iou.size(); ++c) {
    nlohmann::ordered_json e;
    e["class"] = r.class_ids[c];
    e["iou"] = r.per_class_iou[c] ? nlohmann::ordered_json(*r.per_class_iou[c]) : nlohmann::ordered_json(nullptr);
    per_class.push_back(e);
  }
  j["per_class_iou"] = per_class;
  j["miou_base"] = r.miou_base;
  j["miou_novel"] = r.miou_novel;
  j["miou_avg"] = r.miou_avg;
  auto matching = nlohmann::ordered_json::array();
  for (const auto& m : r.matching) {
    matching.push_back({{"predicted", m.predicted}, {"ground_truth", m.ground_truth}, {"iou", m.iou}});
  }
  j["matching"] = matching;
  j["unmatched_predicted"] = r.unmatched_predicted;
  j["ignored_pixels"] = r.ignored_pixels;
  return j;
}

}  // namespace maskgcd
