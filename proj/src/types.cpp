#include "maskgcd/types.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <unordered_map>
#include <utility>

#include "maskgcd/error.hpp"

namespace maskgcd {

FeatureMatrix::FeatureMatrix(size_t rows, size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "feature buffer has " + std::to_string(data_.size()) + " values, expected " +
                    std::to_string(rows_ * cols_));
  }
}

DiscoveryInstance DiscoveryInstance::subset(std::span<const size_t> indices) const {
  DiscoveryInstance out;
  out.k_base = k_base;
  out.k_novel = k_novel;
  out.images = images;
  out.masks.reserve(indices.size());
  std::vector<float> data;
  data.reserve(indices.size() * features.cols());
  const bool geom = !geometry.empty();
  for (size_t i : indices) {
    out.masks.push_back(masks[i]);
    const auto r = features.row(i);
    data.insert(data.end(), r.begin(), r.end());
    if (geom) out.geometry.push_back(geometry[i]);
  }
  out.features = FeatureMatrix(indices.size(), features.cols(), std::move(data));
  return out;
}

LabelState LabelState::initial(const DiscoveryInstance& instance) {
  LabelState s;
  s.label.assign(instance.size(), kNovelPending);
  s.confidence.assign(instance.size(), 0.0);
  for (size_t i = 0; i < instance.size(); ++i) {
    if (instance.is_labeled(i) && instance.masks[i].label) {
      s.label[i] = *instance.masks[i].label;
      s.confidence[i] = 1.0;
    }
  }
  return s;
}

namespace {

std::string coord(int32_t y, int32_t x) {
  return "(" + std::to_string(y) + "," + std::to_string(x) + ")";
}

void check_image_partition(const DiscoveryInstance& inst, const ImageInfo& img,
                           const std::vector<size_t>& members, ValidationReport& report) {
  const size_t npix = static_cast<size_t>(img.height) * img.width;
  std::vector<int64_t> owner(npix, -1);
  std::set<std::pair<int64_t, int64_t>> reported;
  for (size_t i : members) {
    const RleMask& g = *inst.geometry[i];
    const int64_t id = inst.masks[i].mask_id;
    for_each_pixel(g, [&](int32_t y, int32_t x) {
      int64_t& o = owner[static_cast<size_t>(y) * img.width + x];
      if (o >= 0) {
        const auto key = std::minmax(o, id);
        if (reported.insert(key).second) {
          report.push_back({Violation::Kind::kOverlap,
                            "masks " + std::to_string(key.first) + " and " +
                                std::to_string(key.second) + " overlap at pixel " + coord(y, x) +
                                " in image " + std::to_string(img.image_id),
                            {key.first, key.second},
                            img.image_id});
        }
      } else {
        o = id;
      }
    });
  }
  size_t gaps = 0;
  size_t first = npix;
  for (size_t p = 0; p < npix; ++p) {
    if (owner[p] < 0) {
      if (gaps == 0) first = p;
      ++gaps;
    }
  }
  if (gaps > 0) {
    report.push_back({Violation::Kind::kCoverageGap,
                      std::to_string(gaps) + " uncovered pixel(s) in image " +
                          std::to_string(img.image_id) + ", first at " +
                          coord(static_cast<int32_t>(first / img.width),
                                static_cast<int32_t>(first % img.width)),
                      {},
                      img.image_id});
  }
}

}  // namespace

ValidationReport validate_instance(const DiscoveryInstance& inst) {
  ValidationReport report;
  const size_t n = inst.size();
  if (inst.features.rows() != n) {
    report.push_back({Violation::Kind::kCountMismatch,
                      "feature rows " + std::to_string(inst.features.rows()) + " != masks " +
                          std::to_string(n),
                      {},
                      std::nullopt});
  }
  if (!inst.geometry.empty() && inst.geometry.size() != n) {
    report.push_back({Violation::Kind::kCountMismatch,
                      "geometry entries " + std::to_string(inst.geometry.size()) + " != masks " +
                          std::to_string(n),
                      {},
                      std::nullopt});
  }

  std::unordered_map<int64_t, size_t> seen;
  for (size_t i = 0; i < n; ++i) {
    const MaskRecord& m = inst.masks[i];
    if (auto [it, fresh] = seen.emplace(m.mask_id, i); !fresh) {
      report.push_back({Violation::Kind::kDuplicateMaskId,
                        "mask_id " + std::to_string(m.mask_id) + " appears more than once",
                        {m.mask_id},
                        m.image_id});
    }
    if (i < inst.features.rows() && !all_finite(inst.features.row(i))) {
      report.push_back({Violation::Kind::kNonFiniteFeature,
                        "mask " + std::to_string(m.mask_id) + " has a non-finite feature",
                        {m.mask_id},
                        m.image_id});
    }
    const bool labeled = m.split == Split::kLabeled;
    if (labeled != m.label.has_value()) {
      report.push_back({Violation::Kind::kLabelSplitMismatch,
                        "mask " + std::to_string(m.mask_id) +
                            (labeled ? " is labeled but has no label"
                                     : " is unlabeled but carries a label"),
                        {m.mask_id},
                        m.image_id});
    }
    if (m.label && (*m.label < 0 || *m.label >= inst.k_base)) {
      report.push_back({Violation::Kind::kLabelOutOfRange,
                        "mask " + std::to_string(m.mask_id) + " label " +
                            std::to_string(*m.label) + " outside [0, " +
                            std::to_string(inst.k_base) + ")",
                        {m.mask_id},
                        m.image_id});
    }
    if (inst.has_geometry(i)) {
      const RleMask& g = *inst.geometry[i];
      const uint64_t area = g.area();
      if (m.area < 1 || area != static_cast<uint64_t>(m.area)) {
        report.push_back({Violation::Kind::kAreaMismatch,
                          "mask " + std::to_string(m.mask_id) + " area " + std::to_string(m.area) +
                              " but geometry has " + std::to_string(area) + " pixels",
                          {m.mask_id},
                          m.image_id});
      }
      const TightBox tb = rle_bbox(g);
      if (BBox{tb.x, tb.y, tb.w, tb.h} != m.bbox) {
        report.push_back({Violation::Kind::kBBoxMismatch,
                          "mask " + std::to_string(m.mask_id) + " bbox is not tight",
                          {m.mask_id},
                          m.image_id});
      }
    } else if (m.area < 1) {
      report.push_back({Violation::Kind::kAreaMismatch,
                        "mask " + std::to_string(m.mask_id) + " has area < 1",
                        {m.mask_id},
                        m.image_id});
    }
  }

  // Partition checks only apply to images whose masks carry geometry.
  std::map<int64_t, std::vector<size_t>> by_image;
  for (size_t i = 0; i < n; ++i) {
    if (inst.has_geometry(i)) by_image[inst.masks[i].image_id].push_back(i);
  }
  for (const auto& [image_id, members] : by_image) {
    auto img = std::find_if(inst.images.begin(), inst.images.end(),
                            [&](const ImageInfo& im) { return im.image_id == image_id; });
    if (img == inst.images.end()) {
      report.push_back({Violation::Kind::kUnknownImage,
                        "image " + std::to_string(image_id) + " is not listed",
                        {},
                        image_id});
      continue;
    }
    bool shapes_ok = true;
    for (size_t i : members) {
      const RleMask& g = *inst.geometry[i];
      uint64_t total = 0;
      for (uint32_t c : g.counts) total += c;
      if (g.height != img->height || g.width != img->width ||
          total != static_cast<uint64_t>(g.height) * static_cast<uint64_t>(g.width)) {
        shapes_ok = false;
        report.push_back({Violation::Kind::kGeometryShape,
                          "mask " + std::to_string(inst.masks[i].mask_id) +
                              " geometry size or run total differs from its image",
                          {inst.masks[i].mask_id},
                          image_id});
      }
    }
    if (shapes_ok) check_image_partition(inst, *img, members, report);
  }
  return report;
}

}  // namespace maskgcd
