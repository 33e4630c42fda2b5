#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskgcd/types.hpp"

namespace maskgcd {

// Row-major matrix of double-precision centroids.
struct CentroidMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  CentroidMatrix() = default;
  CentroidMatrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<const double> row(size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(size_t i) { return {data.data() + i * cols, cols}; }

  bool operator==(const CentroidMatrix&) const = default;
};

enum class ClusterMode {
  kBaseline,   // every mask, k_base + k_novel clusters, labeled masks pinned to their class
  kNovelOnly,  // only pending unlabeled masks, k_novel clusters, everything else keeps its label
};

struct ClusterConfig {
  int max_lloyd_iters = 300;
  bool freeze_base_centroids = false;
  uint64_t rng_seed = 0;
  int n_init = 10;  // seeded restarts in cluster_baseline / cluster_novel; restart r uses a seed derived from rng_seed
};

struct ClusterModel {
  CentroidMatrix centroids;          // (k_base + k_pred) x D
  std::vector<int32_t> assignment;   // final class per mask (novel clusters are k_base + j)
  std::vector<double> weights;       // mask area
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after every assignment step
  int iterations = 0;
  int32_t k_pred = 0;                // novel clusters actually formed
};

// W-weighted mean of the labeled masks of each base class. Throws EMPTY_CLASS.
CentroidMatrix base_prototypes(const DiscoveryInstance& instance);

// Sampling mass W * D^2 of each candidate, D = distance to the nearest given center.
// With no centers every candidate gets its weight W.
std::vector<double> d2_sampling_mass(const FeatureMatrix& candidates, std::span<const double> weights,
                                     const CentroidMatrix& centers);

struct SeedResult {
  CentroidMatrix centroids;    // k_novel x D
  std::vector<size_t> chosen;  // candidate rows, in pick order
};

// k-means++ seeding that also keeps away from the base prototypes. Candidates already
// chosen are never re-picked; if every remaining mass is zero, sampling falls back to W.
// Throws NOT_ENOUGH_CANDIDATES when k_novel exceeds the candidate count.
SeedResult seed_novel_centroids(const FeatureMatrix& candidates, std::span<const double> weights,
                                const CentroidMatrix& base_prototypes, int32_t k_novel, uint64_t rng_seed);

// Weighted Lloyd iterations from init_centroids. In kBaseline mode init_centroids holds
// k_base + k_novel rows; in kNovelOnly mode it holds the novel rows only. Stops when
// assignments repeat or after max_lloyd_iters. Empty clusters are moved to the free
// mask with the largest W * d^2.
ClusterModel constrained_kmeans(const DiscoveryInstance& instance, const LabelState& state,
                                const CentroidMatrix& init_centroids, ClusterMode mode,
                                const ClusterConfig& cfg);

// Prototypes, seeding over unlabeled masks, then constrained_kmeans in kBaseline mode;
// best of cfg.n_init seedings by final inertia.
ClusterModel cluster_baseline(const DiscoveryInstance& instance, const ClusterConfig& cfg);

// Clustering division: seeds over pending masks, then constrained_kmeans in kNovelOnly mode
// (best of cfg.n_init seedings).
ClusterModel cluster_novel(const DiscoveryInstance& instance, const LabelState& state,
                           const ClusterConfig& cfg);

// Nearest centroid per row (ties to the lower centroid index).
std::vector<int32_t> assign_to_nearest(const FeatureMatrix& features, std::span<const size_t> rows,
                                       const CentroidMatrix& centroids);

namespace serial {
std::vector<int32_t> assign_to_nearest(const FeatureMatrix& features, std::span<const size_t> rows,
                                       const CentroidMatrix& centroids);
}  // namespace serial

}  // namespace maskgcd
