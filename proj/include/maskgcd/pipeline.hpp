#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "maskgcd/clustering.hpp"
#include "maskgcd/error.hpp"
#include "maskgcd/evaluate.hpp"
#include "maskgcd/io.hpp"
#include "maskgcd/knn.hpp"
#include "maskgcd/propagation.hpp"
#include "maskgcd/types.hpp"

namespace maskgcd {

enum class PipelineMode { kBaseline, kNerg };

struct RunConfig {
  std::string run_id = "run";
  PipelineMode mode = PipelineMode::kNerg;
  int32_t k_base = 0;
  int32_t k_novel = 0;
  int k = 10;
  PropagationConfig propagation;
  // Ablation switches, NERG mode only. With both off the pending set is every unlabeled mask.
  bool label_propagation = true;
  bool structural_completion = true;
  ClusterConfig cluster;
  int64_t area_threshold = 1024;
  bool normalize_features = false;
  MatchStrategy matching = MatchStrategy::kHungarian;
  InstancePaths inputs;
  std::optional<std::filesystem::path> gt_dir;
  std::filesystem::path out_dir = "out";
  nlohmann::ordered_json source;  // the config as written, echoed into reports
};

// Throws CONFIG_ERROR for unknown keys, wrong types or out-of-range values.
// Relative paths resolve against base_dir.
RunConfig parse_config(const nlohmann::ordered_json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

uint64_t fnv1a64(std::span<const unsigned char> bytes, uint64_t h = 0xcbf29ce484222325ULL);
uint64_t file_checksum(const std::filesystem::path& path);
std::string hex64(uint64_t v);
// Hash of the config with keys sorted, so key order in the file does not matter.
uint64_t config_hash(const RunConfig& cfg);

// Module error tagged with the pipeline stage that raised it.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const noexcept { return stage_; }
  ErrorCode code() const noexcept { return code_; }

 private:
  std::string stage_;
  ErrorCode code_;
};

// The instance after validation, plus the sub-instance of masks large enough to cluster.
struct PreparedInstance {
  DiscoveryInstance full;
  std::vector<size_t> kept;  // indices into full, canonical order
  DiscoveryInstance work;    // full.subset(kept)
};

PreparedInstance prepare(DiscoveryInstance instance, int64_t area_threshold);

struct ClusterSummary {
  int32_t k_pred = 0;
  int iterations = 0;
  double inertia = 0.0;
};

struct PipelineResult {
  LabelState labels;  // over the full instance, after small-mask filling
  ClusterSummary cluster;
  PropagationStats propagation;
  std::vector<SegmentationMap> maps;
  std::optional<EvalReport> report;
};

// Whole pipeline in memory. gt_maps may be empty (no evaluation).
PipelineResult execute(const RunConfig& cfg, const DiscoveryInstance& instance,
                       std::span<const SegmentationMap> gt_maps);

// Reads inputs named by the config, executes, writes labels.ndjson, maps/, cluster.json,
// eval_report.json (with ground truth) and run_manifest.json into out_dir.
PipelineResult run_pipeline(const RunConfig& cfg);

// Single stages over the files in out_dir, so a run can be replayed piecewise.
// knn -> neighbors.gcdk; propagate -> labels_propagated.ndjson; complete ->
// labels_completed.ndjson; cluster -> labels.ndjson + cluster.json; assemble -> maps/;
// eval -> eval_report.json.
void run_stage(const std::string& stage, const RunConfig& cfg);

// Report body shared by run_pipeline and the eval stage.
nlohmann::ordered_json report_json(const RunConfig& cfg, const ClusterSummary& cluster, const EvalReport& report);

// Images holding unlabeled masks; only those are scored.
std::vector<int64_t> evaluation_images(const DiscoveryInstance& instance);

}  // namespace maskgcd
