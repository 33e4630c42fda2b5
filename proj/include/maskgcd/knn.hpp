#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "maskgcd/types.hpp"

namespace maskgcd {

struct Neighbor {
  uint32_t index = 0;
  float distance = 0.0f;
  bool operator==(const Neighbor&) const = default;
};

// Exact top-k neighbors per row under L2, ascending by distance, ties to the lower index.
// A row never lists itself.
struct NeighborTable {
  size_t n = 0;
  size_t k = 0;
  std::vector<uint32_t> neighbors;  // n * k
  std::vector<float> distances;     // n * k

  std::span<const uint32_t> indices(size_t i) const { return {neighbors.data() + i * k, k}; }
  std::span<const float> row_distances(size_t i) const { return {distances.data() + i * k, k}; }

  bool operator==(const NeighborTable&) const = default;
};

// Parallel over query rows. Throws K_TOO_LARGE when k >= N and PARAM_ERROR when k < 1.
NeighborTable build_neighbor_table(const FeatureMatrix& features, int k, bool normalize_features = false);
NeighborTable build_neighbor_table(const DiscoveryInstance& instance, int k,
                                   bool normalize_features = false);

namespace serial {
// Reference kernel: full distance row, then partial sort. Same arithmetic as the parallel one.
NeighborTable build_neighbor_table(const FeatureMatrix& features, int k, bool normalize_features = false);
}  // namespace serial

// Throws INDEX_OUT_OF_RANGE for mask_index >= n.
std::vector<Neighbor> neighbors_of(const NeighborTable& table, size_t mask_index);

// Rows scaled to unit L2 norm; zero rows stay zero.
FeatureMatrix l2_normalized(const FeatureMatrix& features);

// Cache layout: "GCDK", u32 N, u32 k, then N*k (u32 index, f32 distance) pairs, little-endian.
void write_neighbor_cache(const NeighborTable& table, const std::filesystem::path& path);
NeighborTable read_neighbor_cache(const std::filesystem::path& path);

}  // namespace maskgcd
