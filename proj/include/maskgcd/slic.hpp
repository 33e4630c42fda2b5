#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskgcd/rle.hpp"
#include "maskgcd/types.hpp"

namespace maskgcd {

struct SlicParams {
  int n_segments = 100;
  double compactness = 10.0;  // weight of spatial distance against RGB distance
  int max_iters = 10;
  bool seed_perturb = false;  // move each seed to the lowest-gradient pixel of its 3x3 patch
};

struct SlicCenter {
  double r = 0, g = 0, b = 0;
  double x = 0, y = 0;  // continuous coordinates; pixel (i, j) has center (i + 0.5, j + 0.5)
};

struct SlicResult {
  int32_t height = 0;
  int32_t width = 0;
  std::vector<int32_t> labels;  // row-major, compact ids in order of first appearance
  int32_t num_segments = 0;
  int32_t grid_spacing = 0;
  // Energy sum(color^2 + (m/S)^2 * spatial^2) right after each center update.
  std::vector<double> energy_history;
};

// Grid spacing S = round(sqrt(H*W / n)), at least 1.
int32_t slic_grid_spacing(int32_t height, int32_t width, int n_segments);

// Initial centers on a ceil(W/S) x ceil(H/S) grid (shrunk to at most 2n seeds),
// placed at cell centers, row by row.
std::vector<SlicCenter> slic_initial_centers(const RgbImage& image, const SlicParams& params);

// Clustering plus the connectivity pass. Throws PARAM_ERROR on bad parameters.
SlicResult slic_label_raster(const RgbImage& image, const SlicParams& params);

// Disjoint, covering, 4-connected superpixels as RLE masks.
std::vector<RleMask> slic_segment(const RgbImage& image, const SlicParams& params);

// Splits a compact label raster into one RLE per label, in one column-major pass.
std::vector<RleMask> masks_from_labels(int32_t height, int32_t width, std::span<const int32_t> labels,
                                       int32_t num_labels);

// Per mask: mean R, G, B scaled to [0,1], centroid x / W, centroid y / H.
FeatureMatrix centroid_features(const RgbImage& image, std::span<const RleMask> masks);

// Assignment kernels. A pixel considers every center within S on both axes plus its
// current center (current < 0 means none); ties go to the lower center index.
std::vector<int32_t> slic_assign(const RgbImage& image, std::span<const SlicCenter> centers,
                                 std::span<const int32_t> current, int32_t spacing, double compactness);
namespace serial {
std::vector<int32_t> slic_assign(const RgbImage& image, std::span<const SlicCenter> centers,
                                 std::span<const int32_t> current, int32_t spacing, double compactness);
}  // namespace serial

}  // namespace maskgcd
