#include "maskgcd/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

namespace maskgcd {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::kConfigError, msg); }

const ojson* find_key(const ojson& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

template <typename T>
void read_int(const ojson& j, const char* key, T& dst) {
  const ojson* v = find_key(j, key);
  if (!v) return;
  if (!v->is_number_integer()) config_error(std::string(key) + " must be an integer");
  const auto raw = v->get<int64_t>();
  if (raw < static_cast<int64_t>(std::numeric_limits<T>::min()) ||
      (raw > 0 && static_cast<uint64_t>(raw) > static_cast<uint64_t>(std::numeric_limits<T>::max()))) {
    config_error(std::string(key) + " out of range");
  }
  dst = static_cast<T>(raw);
}

void read_real(const ojson& j, const char* key, double& dst) {
  const ojson* v = find_key(j, key);
  if (!v) return;
  if (!v->is_number()) config_error(std::string(key) + " must be a number");
  dst = v->get<double>();
}

void read_bool(const ojson& j, const char* key, bool& dst) {
  const ojson* v = find_key(j, key);
  if (!v) return;
  if (!v->is_boolean()) config_error(std::string(key) + " must be true or false");
  dst = v->get<bool>();
}

std::optional<std::string> read_string(const ojson& j, const char* key) {
  const ojson* v = find_key(j, key);
  if (!v) return std::nullopt;
  if (!v->is_string()) config_error(std::string(key) + " must be a string");
  return v->get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

template <typename F>
auto staged(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e.code(), e.what());
  }
}

void write_json(const ojson& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

ojson read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, path.string() + ": " + e.what());
  }
}

std::vector<SegmentationMap> read_gt(const RunConfig& cfg) {
  if (!cfg.gt_dir) return {};
  return read_map_dir(*cfg.gt_dir);
}

DiscoveryInstance ingest(const RunConfig& cfg) {
  return staged("ingest", [&] { return read_instance(cfg.inputs, cfg.k_base, cfg.k_novel); });
}

PreparedInstance prepare_staged(DiscoveryInstance inst, const RunConfig& cfg) {
  return staged("validate", [&] { return prepare(std::move(inst), cfg.area_threshold); });
}

NeighborTable graph(const PreparedInstance& p, const RunConfig& cfg) {
  return staged("knn", [&] { return build_neighbor_table(p.work, cfg.k, cfg.normalize_features); });
}

NeighborTable cached_graph(const PreparedInstance& p, const RunConfig& cfg) {
  return staged("knn", [&] {
    NeighborTable t = read_neighbor_cache(cfg.out_dir / "neighbors.gcdk");
    if (t.n != p.work.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "neighbor cache covers " + std::to_string(t.n) +
                                                     " masks, instance has " + std::to_string(p.work.size()));
    }
    return t;
  });
}

// Clustering, then small-mask filling over the full instance.
LabelState finish(const RunConfig& cfg, const PreparedInstance& p, const LabelState& work_state,
                  ClusterSummary& summary) {
  const ClusterModel model = staged("cluster", [&] {
    return cfg.mode == PipelineMode::kBaseline ? cluster_baseline(p.work, cfg.cluster)
                                               : cluster_novel(p.work, work_state, cfg.cluster);
  });
  summary.k_pred = model.k_pred;
  summary.iterations = model.iterations;
  summary.inertia = model.inertia;

  LabelState full = LabelState::initial(p.full);
  for (size_t w = 0; w < p.kept.size(); ++w) {
    const size_t i = p.kept[w];
    if (p.work.is_labeled(w)) continue;
    const bool clustered = cfg.mode == PipelineMode::kBaseline || work_state.label[w] == kNovelPending;
    full.label[i] = model.assignment[w];
    full.confidence[i] = clustered ? 1.0 : work_state.confidence[w];
  }
  return staged("fill", [&] { return fill_small_masks(p.full, full, cfg.area_threshold); });
}

std::vector<SegmentationMap> assemble(const DiscoveryInstance& full, const LabelState& labels) {
  return staged("assemble", [&] {
    for (size_t i = 0; i < full.size(); ++i) {
      if (!full.has_geometry(i)) return std::vector<SegmentationMap>{};
    }
    return assemble_maps(full, labels);
  });
}

std::optional<EvalReport> score(const RunConfig& cfg, const DiscoveryInstance& full,
                                std::span<const SegmentationMap> maps, std::span<const SegmentationMap> gt,
                                int32_t k_pred) {
  if (gt.empty() || maps.empty()) return std::nullopt;
  return staged("eval", [&] {
    std::set<int64_t> gt_ids;
    for (const auto& m : gt) gt_ids.insert(m.image_id);
    std::vector<SegmentationMap> pred;
    for (int64_t id : evaluation_images(full)) {
      if (!gt_ids.count(id)) continue;
      auto it = std::find_if(maps.begin(), maps.end(), [&](const SegmentationMap& m) { return m.image_id == id; });
      if (it == maps.end()) throw Error(ErrorCode::kShapeMismatch, "no predicted map for image " + std::to_string(id));
      pred.push_back(*it);
    }
    std::vector<uint16_t> gt_novel, pred_novel;
    for (int32_t j = 0; j < cfg.k_novel; ++j) gt_novel.push_back(static_cast<uint16_t>(cfg.k_base + j));
    for (int32_t j = 0; j < k_pred; ++j) pred_novel.push_back(static_cast<uint16_t>(cfg.k_base + j));
    return evaluate(pred, gt, cfg.k_base, gt_novel, pred_novel, cfg.matching);
  });
}

ojson stamp(const RunConfig& cfg) {
  ojson j;
  j["run_id"] = cfg.run_id;
  j["config_hash"] = hex64(config_hash(cfg));
  return j;
}

void write_cluster_summary(const RunConfig& cfg, const ClusterSummary& s) {
  ojson j = stamp(cfg);
  j["k_pred"] = s.k_pred;
  j["iterations"] = s.iterations;
  j["inertia"] = s.inertia;
  write_json(j, cfg.out_dir / "cluster.json");
}

ClusterSummary read_cluster_summary(const RunConfig& cfg) {
  const ojson j = read_json(cfg.out_dir / "cluster.json");
  ClusterSummary s;
  try {
    s.k_pred = j.at("k_pred").get<int32_t>();
    s.iterations = j.at("iterations").get<int>();
    s.inertia = j.at("inertia").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormatError, "cluster.json: " + std::string(e.what()));
  }
  return s;
}

void write_maps(const RunConfig& cfg, std::span<const SegmentationMap> maps) {
  fs::create_directories(cfg.out_dir / "maps");
  for (const auto& m : maps) write_map(m, map_path(cfg.out_dir / "maps", m.image_id));
}

LabelState stage_state(const PreparedInstance& p, const fs::path& path) {
  return staged("ingest", [&] { return from_assignments(p.work, read_labels(path)); });
}

}  // namespace

RunConfig parse_config(const ojson& j, const fs::path& base_dir) {
  if (!j.is_object()) config_error("config must be a JSON object");
  static const std::set<std::string> known = {
      "run_id", "mode", "k_base", "k_novel", "k", "theta", "max_iterations", "convergence_eps", "score_norm",
      "label_propagation", "structural_completion", "max_lloyd_iters", "n_init", "freeze_base_centroids", "rng_seed",
      "area_threshold", "normalize_features", "matching", "input_dir", "paths", "out_dir", "synth", "slic"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) config_error("unknown key \"" + key + "\"");
  }
  RunConfig cfg;
  cfg.source = j;
  if (auto s = read_string(j, "run_id")) cfg.run_id = *s;
  if (auto s = read_string(j, "mode")) {
    if (*s == "baseline") {
      cfg.mode = PipelineMode::kBaseline;
    } else if (*s == "nerg") {
      cfg.mode = PipelineMode::kNerg;
    } else {
      config_error("mode must be \"baseline\" or \"nerg\"");
    }
  }
  if (!find_key(j, "k_base") || !find_key(j, "k_novel")) config_error("k_base and k_novel are required");
  read_int(j, "k_base", cfg.k_base);
  read_int(j, "k_novel", cfg.k_novel);
  read_int(j, "k", cfg.k);
  read_real(j, "theta", cfg.propagation.theta);
  read_int(j, "max_iterations", cfg.propagation.max_iterations);
  read_real(j, "convergence_eps", cfg.propagation.convergence_eps);
  if (auto s = read_string(j, "score_norm")) {
    if (*s == "k") {
      cfg.propagation.score_norm = ScoreNorm::kK;
    } else if (*s == "mass") {
      cfg.propagation.score_norm = ScoreNorm::kMass;
    } else {
      config_error("score_norm must be \"k\" or \"mass\"");
    }
  }
  read_bool(j, "label_propagation", cfg.label_propagation);
  read_bool(j, "structural_completion", cfg.structural_completion);
  read_int(j, "max_lloyd_iters", cfg.cluster.max_lloyd_iters);
  read_int(j, "n_init", cfg.cluster.n_init);
  read_bool(j, "freeze_base_centroids", cfg.cluster.freeze_base_centroids);
  read_int(j, "rng_seed", cfg.cluster.rng_seed);
  read_int(j, "area_threshold", cfg.area_threshold);
  read_bool(j, "normalize_features", cfg.normalize_features);
  if (auto s = read_string(j, "matching")) {
    if (*s == "hungarian") {
      cfg.matching = MatchStrategy::kHungarian;
    } else if (*s == "greedy") {
      cfg.matching = MatchStrategy::kGreedy;
    } else {
      config_error("matching must be \"hungarian\" or \"greedy\"");
    }
  }

  if (auto s = read_string(j, "input_dir")) {
    const fs::path dir = resolve(base_dir, *s);
    cfg.inputs = InstancePaths::in_directory(dir);
    if (fs::is_directory(dir / "gt")) cfg.gt_dir = dir / "gt";
  }
  if (const ojson* paths = find_key(j, "paths")) {
    if (!paths->is_object()) config_error("paths must be an object");
    for (const auto& [key, _] : paths->items()) {
      static const std::set<std::string> path_keys = {"records", "features_meta", "features_bin", "geometries",
                                                      "gt_dir"};
      if (!path_keys.count(key)) config_error("unknown key \"paths." + key + "\"");
    }
    if (auto s = read_string(*paths, "records")) cfg.inputs.records = resolve(base_dir, *s);
    if (auto s = read_string(*paths, "features_meta")) cfg.inputs.features_meta = resolve(base_dir, *s);
    if (auto s = read_string(*paths, "features_bin")) cfg.inputs.features_bin = resolve(base_dir, *s);
    if (auto s = read_string(*paths, "geometries")) cfg.inputs.geometries = resolve(base_dir, *s);
    if (auto s = read_string(*paths, "gt_dir")) cfg.gt_dir = resolve(base_dir, *s);
  }
  if (auto s = read_string(j, "out_dir")) cfg.out_dir = resolve(base_dir, *s);

  if (cfg.k_base < 1) config_error("k_base must be at least 1");
  if (cfg.k_novel < 0) config_error("k_novel must be non-negative");
  if (cfg.k < 1) config_error("k must be at least 1");
  if (cfg.cluster.max_lloyd_iters < 1) config_error("max_lloyd_iters must be at least 1");
  if (cfg.cluster.n_init < 1) config_error("n_init must be at least 1");
  if (cfg.area_threshold < 0) config_error("area_threshold must be non-negative");
  if (!(cfg.propagation.convergence_eps >= 0)) config_error("convergence_eps must be non-negative");
  try {
    validate(cfg.propagation);
  } catch (const Error& e) {
    config_error(e.what());
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error("cannot open config " + path.string());
  ojson j;
  try {
    j = ojson::parse(in);
  } catch (const nlohmann::json::exception& e) {
    config_error(path.string() + ": " + e.what());
  }
  return parse_config(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

uint64_t fnv1a64(std::span<const unsigned char> bytes, uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t config_hash(const RunConfig& cfg) {
  const std::string canon = nlohmann::json::parse(cfg.source.dump()).dump();
  return fnv1a64({reinterpret_cast<const unsigned char*>(canon.data()), canon.size()});
}

PreparedInstance prepare(DiscoveryInstance instance, int64_t area_threshold) {
  const ValidationReport report = validate_instance(instance);
  if (!report.empty()) {
    std::string msg = std::to_string(report.size()) + " violation(s)";
    for (size_t v = 0; v < std::min<size_t>(report.size(), 5); ++v) msg += "; " + report[v].message;
    throw Error(ErrorCode::kInvalidInstance, msg);
  }
  PreparedInstance p;
  p.full = std::move(instance);
  for (size_t i = 0; i < p.full.size(); ++i) {
    if (p.full.masks[i].area >= area_threshold) p.kept.push_back(i);
  }
  if (p.kept.empty()) throw Error(ErrorCode::kInvalidInstance, "every mask is below area_threshold");
  p.work = p.full.subset(p.kept);
  return p;
}

std::vector<int64_t> evaluation_images(const DiscoveryInstance& inst) {
  std::set<int64_t> ids;
  for (size_t i = 0; i < inst.size(); ++i) {
    if (!inst.is_labeled(i)) ids.insert(inst.masks[i].image_id);
  }
  std::vector<int64_t> out;
  for (const auto& img : inst.images) {
    if (ids.count(img.image_id)) out.push_back(img.image_id);
  }
  return out;
}

PipelineResult execute(const RunConfig& cfg, const DiscoveryInstance& instance,
                       std::span<const SegmentationMap> gt_maps) {
  PipelineResult r;
  const PreparedInstance p = prepare_staged(instance, cfg);
  LabelState work_state = LabelState::initial(p.work);
  if (cfg.mode == PipelineMode::kNerg && (cfg.label_propagation || cfg.structural_completion)) {
    const NeighborTable table = graph(p, cfg);
    if (cfg.label_propagation) {
      work_state = staged("propagate", [&] { return propagate(p.work, work_state, table, cfg.propagation, &r.propagation); });
    }
    if (cfg.structural_completion) {
      work_state = staged("complete", [&] { return structural_completion(p.work, work_state, table, cfg.propagation); });
    }
  }
  r.labels = finish(cfg, p, work_state, r.cluster);
  r.maps = assemble(p.full, r.labels);
  r.report = score(cfg, p.full, r.maps, gt_maps, r.cluster.k_pred);
  return r;
}

nlohmann::ordered_json report_json(const RunConfig& cfg, const ClusterSummary& cluster, const EvalReport& report) {
  ojson j = stamp(cfg);
  j["area_threshold"] = cfg.area_threshold;
  j["k_pred"] = cluster.k_pred;
  const ojson body = to_json(report);
  for (const auto& [key, value] : body.items()) j[key] = value;
  j["config"] = cfg.source;
  return j;
}

PipelineResult run_pipeline(const RunConfig& cfg) {
  DiscoveryInstance inst = ingest(cfg);
  const auto gt = staged("ingest", [&] { return read_gt(cfg); });
  PipelineResult r = execute(cfg, inst, gt);
  staged("write", [&] {
    fs::create_directories(cfg.out_dir);
    write_labels(to_assignments(inst, r.labels), cfg.out_dir / "labels.ndjson");
    write_cluster_summary(cfg, r.cluster);
    write_maps(cfg, r.maps);
    if (r.report) write_json(report_json(cfg, r.cluster, *r.report), cfg.out_dir / "eval_report.json");

    ojson manifest = stamp(cfg);
    std::vector<fs::path> artifacts = {"labels.ndjson", "cluster.json"};
    if (r.report) artifacts.emplace_back("eval_report.json");
    for (const auto& m : r.maps) artifacts.push_back(fs::path("maps") / map_path("", m.image_id).filename());
    ojson sums = ojson::object();
    for (const auto& a : artifacts) sums[a.generic_string()] = hex64(file_checksum(cfg.out_dir / a));
    manifest["artifacts"] = sums;
    write_json(manifest, cfg.out_dir / "run_manifest.json");
    return 0;
  });
  return r;
}

void run_stage(const std::string& stage, const RunConfig& cfg) {
  staged("write", [&] {
    fs::create_directories(cfg.out_dir);
    return 0;
  });
  if (stage == "knn") {
    const PreparedInstance p = prepare_staged(ingest(cfg), cfg);
    const NeighborTable t = graph(p, cfg);
    staged("write", [&] {
      write_neighbor_cache(t, cfg.out_dir / "neighbors.gcdk");
      return 0;
    });
  } else if (stage == "propagate" || stage == "complete") {
    const PreparedInstance p = prepare_staged(ingest(cfg), cfg);
    const NeighborTable t = cached_graph(p, cfg);
    LabelState s;
    if (stage == "propagate") {
      s = staged("propagate", [&] { return propagate(p.work, LabelState::initial(p.work), t, cfg.propagation); });
    } else {
      const LabelState prior = cfg.label_propagation ? stage_state(p, cfg.out_dir / "labels_propagated.ndjson")
                                                     : LabelState::initial(p.work);
      s = staged("complete", [&] { return structural_completion(p.work, prior, t, cfg.propagation); });
    }
    staged("write", [&] {
      const fs::path out = cfg.out_dir / (stage == "propagate" ? "labels_propagated.ndjson" : "labels_completed.ndjson");
      write_labels(to_assignments(p.work, s), out, stage);
      return 0;
    });
  } else if (stage == "cluster") {
    const PreparedInstance p = prepare_staged(ingest(cfg), cfg);
    LabelState s = LabelState::initial(p.work);
    if (cfg.mode == PipelineMode::kNerg) {
      if (cfg.structural_completion) {
        s = stage_state(p, cfg.out_dir / "labels_completed.ndjson");
      } else if (cfg.label_propagation) {
        s = stage_state(p, cfg.out_dir / "labels_propagated.ndjson");
      }
    }
    ClusterSummary summary;
    const LabelState full = finish(cfg, p, s, summary);
    staged("write", [&] {
      write_labels(to_assignments(p.full, full), cfg.out_dir / "labels.ndjson");
      write_cluster_summary(cfg, summary);
      return 0;
    });
  } else if (stage == "assemble") {
    const DiscoveryInstance inst = ingest(cfg);
    const LabelState labels =
        staged("ingest", [&] { return from_assignments(inst, read_labels(cfg.out_dir / "labels.ndjson")); });
    const auto maps = assemble(inst, labels);
    staged("write", [&] {
      write_maps(cfg, maps);
      return 0;
    });
  } else if (stage == "eval") {
    const DiscoveryInstance inst = ingest(cfg);
    if (!cfg.gt_dir) throw StageError("eval", ErrorCode::kConfigError, "CONFIG_ERROR: no gt_dir configured");
    const auto summary = staged("ingest", [&] { return read_cluster_summary(cfg); });
    const auto maps = staged("ingest", [&] { return read_map_dir(cfg.out_dir / "maps"); });
    const auto gt = staged("ingest", [&] { return read_gt(cfg); });
    const auto report = score(cfg, inst, maps, gt, summary.k_pred);
    if (!report) throw StageError("eval", ErrorCode::kShapeMismatch, "SHAPE_MISMATCH: nothing to evaluate");
    staged("write", [&] {
      write_json(report_json(cfg, summary, *report), cfg.out_dir / "eval_report.json");
      return 0;
    });
  } else {
    throw StageError("cli", ErrorCode::kConfigError, "CONFIG_ERROR: unknown stage " + stage);
  }
}

}  // namespace maskgcd
