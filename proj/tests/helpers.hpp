#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "maskgcd/rle.hpp"
#include "maskgcd/types.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Fresh scratch directory, removed first if a previous run left it behind.
inline fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("maskgcd_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

struct RectSpec {
  int64_t mask_id;
  int64_t image_id;
  int32_t x, y, w, h;
  std::optional<int32_t> label;
  std::vector<float> feature;
};

inline maskgcd::RleMask rect_rle(int32_t height, int32_t width, int32_t x, int32_t y, int32_t w, int32_t h) {
  maskgcd::Bitmap b(height, width);
  for (int32_t r = y; r < y + h; ++r) {
    for (int32_t c = x; c < x + w; ++c) b.at(r, c) = 1;
  }
  return maskgcd::rle_encode(b);
}

// Instance of rectangular masks with geometry; labeled iff a label is given.
inline maskgcd::DiscoveryInstance rect_instance(int32_t k_base, int32_t k_novel,
                                                const std::vector<maskgcd::ImageInfo>& images,
                                                const std::vector<RectSpec>& rects) {
  maskgcd::DiscoveryInstance inst;
  inst.k_base = k_base;
  inst.k_novel = k_novel;
  inst.images = images;
  std::vector<float> feats;
  const size_t d = rects.empty() ? 0 : rects[0].feature.size();
  for (const auto& r : rects) {
    const auto& img = *std::find_if(images.begin(), images.end(),
                                    [&](const maskgcd::ImageInfo& i) { return i.image_id == r.image_id; });
    maskgcd::MaskRecord m;
    m.mask_id = r.mask_id;
    m.image_id = r.image_id;
    m.area = static_cast<int64_t>(r.w) * r.h;
    m.bbox = {r.x, r.y, r.w, r.h};
    m.label = r.label;
    m.split = r.label ? maskgcd::Split::kLabeled : maskgcd::Split::kUnlabeled;
    inst.masks.push_back(m);
    inst.geometry.emplace_back(rect_rle(img.height, img.width, r.x, r.y, r.w, r.h));
    feats.insert(feats.end(), r.feature.begin(), r.feature.end());
  }
  inst.features = maskgcd::FeatureMatrix(rects.size(), d, std::move(feats));
  return inst;
}

// Features-only instance (no geometry): one mask per row, areas all `area`.
inline maskgcd::DiscoveryInstance point_instance(int32_t k_base, int32_t k_novel, size_t d,
                                                 const std::vector<std::vector<float>>& rows,
                                                 const std::vector<std::optional<int32_t>>& labels,
                                                 const std::vector<double>& areas = {}) {
  maskgcd::DiscoveryInstance inst;
  inst.k_base = k_base;
  inst.k_novel = k_novel;
  std::vector<float> feats;
  for (size_t i = 0; i < rows.size(); ++i) {
    maskgcd::MaskRecord m;
    m.mask_id = static_cast<int64_t>(i);
    m.image_id = 0;
    m.area = areas.empty() ? 1 : static_cast<int64_t>(areas[i]);
    m.label = labels[i];
    m.split = labels[i] ? maskgcd::Split::kLabeled : maskgcd::Split::kUnlabeled;
    inst.masks.push_back(m);
    feats.insert(feats.end(), rows[i].begin(), rows[i].end());
  }
  inst.features = maskgcd::FeatureMatrix(rows.size(), d, std::move(feats));
  return inst;
}

}  // namespace testutil
