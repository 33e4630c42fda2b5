#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maskgcd/clustering.hpp"
#include "maskgcd/types.hpp"

namespace maskgcd {

// Synthetic corpus with known ground truth. Each class is a Gaussian blob; objects
// ("concepts") may be split into several masks whose smaller parts drift away from the
// class center, the way part-level masks carry weaker semantics than whole objects.
struct SynthSpec {
  int32_t k_base = 15;
  int32_t k_novel = 4;
  int32_t masks_per_class = 0;  // used when total_masks == 0
  int32_t total_masks = 2000;   // spread as evenly as possible across classes
  int32_t feature_dim = 16;
  double intra_std = 1.0;
  double center_separation = 10.0;
  double novel_pixel_fraction = 0.02;  // of the unlabeled pixel area
  int32_t fragmentation = 3;           // max masks per concept; 1 disables fragmentation
  double fragment_drift = 0.7;         // drift of part masks, in units of center_separation
  double labeled_fraction = 0.4;       // share of base concepts placed in labeled images
  int32_t masks_per_image = 20;
  int32_t image_height = 128;
  int32_t image_width = 128;
  uint64_t rng_seed = 0;
};

struct SynthData {
  DiscoveryInstance instance;
  std::vector<int32_t> ground_truth;  // class per mask; novel classes are k_base + j
  CentroidMatrix true_centers;        // (k_base + k_novel) x D
  std::vector<SegmentationMap> gt_maps;
};

// Throws PARAM_ERROR for an inconsistent spec.
SynthData generate(const SynthSpec& spec);

// Nearest true center per mask (ties to the lower class).
std::vector<int32_t> oracle_assign(const DiscoveryInstance& instance, const CentroidMatrix& true_centers);

// Fraction of masks whose prediction agrees with ground truth after the best one-to-one
// relabeling (Hungarian on the contingency table).
double clustering_accuracy(std::span<const int32_t> truth, std::span<const int32_t> predicted);

// Accuracy over masks of novel ground truth (>= k_base): ground-truth novel classes are
// matched to predicted novel labels (>= k_base) only; masks given a base label count as wrong.
double novel_clustering_accuracy(std::span<const int32_t> truth, std::span<const int32_t> predicted,
                                 int32_t k_base);

double adjusted_rand_index(std::span<const int32_t> truth, std::span<const int32_t> predicted);

// Pixel share of novel ground truth within the unlabeled images.
double novel_pixel_share(const SynthData& data);

// Writes records/features/geometries, gt/map_<id>.u16 and gt_labels.ndjson under dir.
void write_synth(const SynthData& data, const std::filesystem::path& dir);

}  // namespace maskgcd
