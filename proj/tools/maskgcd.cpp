// maskgcd: command-line front end. One subcommand per pipeline stage plus `run`.
#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "maskgcd/io.hpp"
#include "maskgcd/pipeline.hpp"
#include "maskgcd/slic.hpp"
#include "maskgcd/synth.hpp"

namespace fs = std::filesystem;
using namespace maskgcd;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kParamError:
    case ErrorCode::kKTooLarge:
      return kExitConfig;
    default:
      return kExitData;
  }
}

SynthSpec synth_spec(const nlohmann::ordered_json& j) {
  SynthSpec s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "synth must be an object");
  auto get = [&](const char* key, auto& dst) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
      dst = it->get<std::remove_reference_t<decltype(dst)>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kConfigError, std::string("synth.") + key + " has the wrong type");
    }
  };
  static const std::set<std::string> known = {
      "k_base", "k_novel", "masks_per_class", "total_masks", "feature_dim", "intra_std", "center_separation",
      "novel_pixel_fraction", "fragmentation", "fragment_drift", "labeled_fraction", "masks_per_image",
      "image_height", "image_width", "rng_seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::kConfigError, "unknown key \"synth." + key + "\"");
  }
  get("k_base", s.k_base);
  get("k_novel", s.k_novel);
  get("masks_per_class", s.masks_per_class);
  get("total_masks", s.total_masks);
  get("feature_dim", s.feature_dim);
  get("intra_std", s.intra_std);
  get("center_separation", s.center_separation);
  get("novel_pixel_fraction", s.novel_pixel_fraction);
  get("fragmentation", s.fragmentation);
  get("fragment_drift", s.fragment_drift);
  get("labeled_fraction", s.labeled_fraction);
  get("masks_per_image", s.masks_per_image);
  get("image_height", s.image_height);
  get("image_width", s.image_width);
  get("rng_seed", s.rng_seed);
  return s;
}

nlohmann::ordered_json read_raw_config(const std::string& path) {
  if (path.empty()) return nlohmann::ordered_json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot open config " + path);
  try {
    return nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, path + ": " + e.what());
  }
}

void write_checksums(const fs::path& dir, const std::vector<fs::path>& files, const fs::path& out) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& f : files) j[f.generic_string()] = hex64(file_checksum(dir / f));
  std::ofstream o(out, std::ios::binary | std::ios::trunc);
  o << j.dump(2) << '\n';
  if (!o) throw Error(ErrorCode::kIoError, "cannot write " + out.string());
}

void synth_command(const std::string& config, std::optional<uint64_t> seed, const fs::path& out) {
  const auto raw = read_raw_config(config);
  SynthSpec spec = synth_spec(raw.contains("synth") ? raw["synth"] : nlohmann::ordered_json());
  if (seed) spec.rng_seed = *seed;
  const SynthData data = generate(spec);
  write_synth(data, out);
  std::vector<fs::path> files = {"records.ndjson", "features.meta.json", "features.f32", "geometries.ndjson",
                                 "gt_labels.ndjson"};
  for (const auto& m : data.gt_maps) files.push_back(fs::path("gt") / map_path("", m.image_id).filename());
  write_checksums(out, files, out / "synth_manifest.json");
  std::cout << "synth: " << data.instance.size() << " masks, " << data.instance.images.size() << " images -> "
            << out.string() << '\n';
}

struct SlicArgs {
  std::string image;
  int segments = 100;
  double compactness = 10.0;
  int max_iters = 10;
  bool perturb = false;
  int64_t image_id = 0;
  int64_t first_mask_id = 0;
  std::string out_records, out_geometries, out_features;
};

void slic_command(const SlicArgs& a) {
  const RgbImage img = read_ppm(a.image);
  SlicParams params;
  params.n_segments = a.segments;
  params.compactness = a.compactness;
  params.max_iters = a.max_iters;
  params.seed_perturb = a.perturb;
  const auto masks = slic_segment(img, params);

  DiscoveryInstance inst;
  inst.images.push_back({a.image_id, img.height, img.width});
  for (size_t i = 0; i < masks.size(); ++i) {
    MaskRecord r;
    r.mask_id = a.first_mask_id + static_cast<int64_t>(i);
    r.image_id = a.image_id;
    r.area = static_cast<int64_t>(masks[i].area());
    const TightBox b = rle_bbox(masks[i]);
    r.bbox = {b.x, b.y, b.w, b.h};
    inst.masks.push_back(r);
    inst.geometry.emplace_back(masks[i]);
  }
  inst.features = centroid_features(img, masks);

  InstancePaths paths;
  paths.records = a.out_records;
  paths.geometries = fs::path(a.out_geometries);
  const fs::path feat = a.out_features.empty() ? fs::path(a.out_records).parent_path() : fs::path(a.out_features);
  if (!feat.empty()) fs::create_directories(feat);
  paths.features_meta = feat / "features.meta.json";
  paths.features_bin = feat / "features.f32";
  write_instance(inst, paths);
  std::cout << "slic: " << masks.size() << " superpixels\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-level category discovery for semantic segmentation"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  int threads = 0;

  const std::vector<std::pair<std::string, std::string>> stages = {
      {"run", "full pipeline"},
      {"knn", "neighbor table -> neighbors.gcdk"},
      {"propagate", "label propagation -> labels_propagated.ndjson"},
      {"complete", "structural completion -> labels_completed.ndjson"},
      {"cluster", "clustering and small-mask filling -> labels.ndjson"},
      {"assemble", "segmentation maps -> maps/"},
      {"eval", "scores maps against ground truth -> eval_report.json"},
  };
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "run config (JSON)")->required();
    sub->add_option("--threads", threads, "worker cap");
    sub->add_option("--out", out, "output directory (overrides out_dir)");
  }

  auto* synth = app.add_subcommand("synth", "synthetic instance with ground truth");
  std::optional<uint64_t> seed;
  std::string synth_out = "synth";
  synth->add_option("--config", config, "config with a \"synth\" object");
  synth->add_option("--seed", seed, "rng seed");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--threads", threads, "worker cap");

  auto* slic = app.add_subcommand("slic", "superpixel masks from a PPM image");
  SlicArgs sa;
  slic->add_option("--image", sa.image, "binary PPM")->required();
  slic->add_option("--segments", sa.segments, "requested superpixels");
  slic->add_option("--compactness", sa.compactness, "spatial weight");
  slic->add_option("--max-iters", sa.max_iters, "iteration cap");
  slic->add_flag("--perturb", sa.perturb, "move seeds off edges");
  slic->add_option("--image-id", sa.image_id, "image id for the records");
  slic->add_option("--first-mask-id", sa.first_mask_id, "mask id of the first superpixel");
  slic->add_option("--out-records", sa.out_records, "records.ndjson path")->required();
  slic->add_option("--out-geometries", sa.out_geometries, "geometries.ndjson path")->required();
  slic->add_option("--out-features", sa.out_features, "directory for features.meta.json / features.f32");
  slic->add_option("--threads", threads, "worker cap");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) omp_set_num_threads(threads);

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "synth") {
      synth_command(config, seed, synth_out);
    } else if (cmd == "slic") {
      slic_command(sa);
    } else {
      RunConfig cfg = load_config(config);
      if (!out.empty()) cfg.out_dir = out;
      if (cmd == "run") {
        const PipelineResult r = run_pipeline(cfg);
        std::cout << "run " << cfg.run_id << ": k_pred=" << r.cluster.k_pred;
        if (r.report) {
          std::printf(" miou base %.4f novel %.4f avg %.4f", r.report->miou_base, r.report->miou_novel,
                      r.report->miou_avg);
          std::fflush(stdout);
        }
        std::cout << '\n';
      } else {
        run_stage(cmd, cfg);
      }
    }
  } catch (const StageError& e) {
    std::cerr << "maskgcd: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const Error& e) {
    std::cerr << "maskgcd: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "maskgcd: internal: " << e.what() << '\n';
    return kExitInternal;
  }
  return 0;
}
