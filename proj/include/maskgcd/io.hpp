#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskgcd/types.hpp"

namespace maskgcd {

struct InstancePaths {
  std::filesystem::path records;         // records.ndjson
  std::filesystem::path features_meta;   // features.meta.json
  std::filesystem::path features_bin;    // features.f32
  std::optional<std::filesystem::path> geometries;  // geometries.ndjson

  // Conventional file names inside one directory; geometries included only if present.
  static InstancePaths in_directory(const std::filesystem::path& dir);
};

// Reads the interchange files. Mask order follows the records file; geometry is
// joined by mask_id and images are derived from geometry sizes.
DiscoveryInstance read_instance(const InstancePaths& paths, int32_t k_base, int32_t k_novel);

// Writes records, features and (when any mask carries geometry) geometries.
void write_instance(const DiscoveryInstance& instance, const InstancePaths& paths);

void write_features(const FeatureMatrix& features, const std::filesystem::path& meta,
                    const std::filesystem::path& bin);

struct LabelAssignment {
  int64_t mask_id = 0;
  int32_t label = 0;
  double confidence = 0.0;
  bool operator==(const LabelAssignment&) const = default;
};

// One JSON object per line, sorted by mask_id. A non-empty stage adds a "stage"
// field (intermediate dumps). Pending masks are written with label -1.
void write_labels(std::span<const LabelAssignment> assignments, const std::filesystem::path& path,
                  const std::string& stage = {});
std::vector<LabelAssignment> read_labels(const std::filesystem::path& path);

std::vector<LabelAssignment> to_assignments(const DiscoveryInstance& instance,
                                            const LabelState& state);
// Inverse of to_assignments; every mask of the instance must be present.
LabelState from_assignments(const DiscoveryInstance& instance,
                            std::span<const LabelAssignment> assignments);

// map_<image_id>.u16: 16-byte header ("GCDM", u16 version, u16 pad, u32 h, u32 w)
// followed by h*w little-endian u16 values, row-major.
void write_map(const SegmentationMap& map, const std::filesystem::path& path);
SegmentationMap read_map(const std::filesystem::path& path, int64_t image_id);
std::filesystem::path map_path(const std::filesystem::path& dir, int64_t image_id);
// All map_<id>.u16 files in dir, ordered by image_id.
std::vector<SegmentationMap> read_map_dir(const std::filesystem::path& dir);

// Binary PPM (P6, maxval 255).
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

}  // namespace maskgcd
