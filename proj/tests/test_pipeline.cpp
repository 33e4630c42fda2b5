#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "helpers.hpp"
#include "maskgcd/io.hpp"
#include "maskgcd/pipeline.hpp"
#include "maskgcd/synth.hpp"

using namespace maskgcd;
using testutil::slurp;
using testutil::spit;
namespace fs = std::filesystem;

namespace {

using ojson = nlohmann::ordered_json;

int cli(const std::string& args) {
  const std::string cmd = std::string(MASKGCD_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorCode config_code(const ojson& j) {
  try {
    parse_config(j, ".");
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIoError;
}

// Small synthetic instance on disk plus a config pointing at it.
struct Fixture {
  fs::path root;
  fs::path data;
  fs::path config;
};

Fixture make_fixture(const std::string& name, ojson extra = ojson::object()) {
  Fixture f;
  f.root = testutil::scratch(name);
  f.data = f.root / "data";
  SynthSpec s;
  s.total_masks = 500;
  write_synth(generate(s), f.data);
  ojson cfg = {{"run_id", name}, {"k_base", s.k_base}, {"k_novel", s.k_novel}, {"area_threshold", 16},
               {"input_dir", "data"}, {"out_dir", "out"}};
  for (const auto& [k, v] : extra.items()) cfg[k] = v;
  f.config = f.root / "run.json";
  spit(f.config, cfg.dump(2));
  return f;
}

}  // namespace

TEST(Config, Errors) {
  EXPECT_EQ(config_code({{"k_base", 2}}), ErrorCode::kConfigError);                                   // k_novel missing
  EXPECT_EQ(config_code({{"k_base", 2}, {"k_novel", 1}, {"bogus", 1}}), ErrorCode::kConfigError);     // unknown key
  EXPECT_EQ(config_code({{"k_base", "2"}, {"k_novel", 1}}), ErrorCode::kConfigError);                 // wrong type
  EXPECT_EQ(config_code({{"k_base", 2}, {"k_novel", 1}, {"theta", 1.5}}), ErrorCode::kConfigError);   // out of range
  EXPECT_EQ(config_code({{"k_base", 2}, {"k_novel", 1}, {"k", 0}}), ErrorCode::kConfigError);
  EXPECT_EQ(config_code({{"k_base", 2}, {"k_novel", 1}, {"mode", "fast"}}), ErrorCode::kConfigError);
  EXPECT_EQ(config_code({{"k_base", 2}, {"k_novel", 1}, {"paths", {{"x", "y"}}}}), ErrorCode::kConfigError);
  EXPECT_NO_THROW(parse_config({{"k_base", 2}, {"k_novel", 1}}, "."));
}

TEST(Config, DefaultsAndPaths) {
  const auto cfg = parse_config({{"k_base", 2}, {"k_novel", 1}, {"input_dir", "in"}, {"out_dir", "o"}}, "/base");
  EXPECT_EQ(cfg.k, 10);
  EXPECT_DOUBLE_EQ(cfg.propagation.theta, 0.1);
  EXPECT_EQ(cfg.propagation.max_iterations, 10);
  EXPECT_EQ(cfg.area_threshold, 1024);
  EXPECT_EQ(cfg.mode, PipelineMode::kNerg);
  EXPECT_EQ(cfg.inputs.records, fs::path("/base/in/records.ndjson"));
  EXPECT_EQ(cfg.out_dir, fs::path("/base/o"));
}

TEST(Config, HashIgnoresKeyOrder) {
  ojson a = {{"k_base", 2}, {"k_novel", 1}, {"theta", 0.2}};
  ojson b = {{"theta", 0.2}, {"k_novel", 1}, {"k_base", 2}};
  EXPECT_EQ(config_hash(parse_config(a, ".")), config_hash(parse_config(b, ".")));
  a["theta"] = 0.3;
  EXPECT_NE(config_hash(parse_config(a, ".")), config_hash(parse_config(b, ".")));
}

TEST(Checksum, Fnv1a) {
  const std::string s = "a";
  EXPECT_EQ(fnv1a64({reinterpret_cast<const unsigned char*>(s.data()), s.size()}), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Pipeline, MissingFeaturesIsIngestDimensionMismatch) {
  const auto f = make_fixture("pl_missing");
  fs::remove(f.data / "features.f32");
  try {
    run_pipeline(load_config(f.config));
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
  EXPECT_EQ(cli("run --config " + f.config.string()), 3);
}

TEST(Pipeline, CliExitCodes) {
  const auto f = make_fixture("pl_exit");
  spit(f.root / "bad.json", R"({"k_base": 2})");
  EXPECT_EQ(cli("run --config " + (f.root / "bad.json").string()), 2);
  EXPECT_EQ(cli("run --config " + (f.root / "absent.json").string()), 2);
  EXPECT_EQ(cli("run --config " + f.config.string()), 0);
}

TEST(Pipeline, StagesComposeToFullRun) {
  const auto f = make_fixture("pl_stages");
  const std::string c = "--config " + f.config.string();
  ASSERT_EQ(cli("run " + c + " --out " + (f.root / "full").string()), 0);
  const std::string o = " --out " + (f.root / "staged").string();
  for (const char* stage : {"knn", "propagate", "complete", "cluster", "assemble", "eval"}) {
    ASSERT_EQ(cli(std::string(stage) + " " + c + o), 0) << stage;
  }
  EXPECT_EQ(slurp(f.root / "full" / "labels.ndjson"), slurp(f.root / "staged" / "labels.ndjson"));
  EXPECT_EQ(slurp(f.root / "full" / "cluster.json"), slurp(f.root / "staged" / "cluster.json"));
  EXPECT_EQ(slurp(f.root / "full" / "eval_report.json"), slurp(f.root / "staged" / "eval_report.json"));
  EXPECT_EQ(read_map_dir(f.root / "full" / "maps"), read_map_dir(f.root / "staged" / "maps"));
  const auto prop = read_labels(f.root / "staged" / "labels_propagated.ndjson");
  EXPECT_FALSE(prop.empty());
  EXPECT_NE(slurp(f.root / "staged" / "labels_propagated.ndjson").find("\"stage\":\"propagate\""), std::string::npos);
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto f = make_fixture("pl_det");
  const std::string c = "--config " + f.config.string();
  ASSERT_EQ(cli("run " + c + " --out " + (f.root / "a").string()), 0);
  ASSERT_EQ(cli("run " + c + " --threads 3 --out " + (f.root / "b").string()), 0);
  for (const char* file : {"labels.ndjson", "cluster.json", "eval_report.json", "run_manifest.json"}) {
    EXPECT_EQ(slurp(f.root / "a" / file), slurp(f.root / "b" / file)) << file;
  }
  const auto report = ojson::parse(slurp(f.root / "a" / "eval_report.json"));
  EXPECT_EQ(report["run_id"], "pl_det");
  EXPECT_EQ(report["config_hash"], hex64(config_hash(load_config(f.config))));
  const auto manifest = ojson::parse(slurp(f.root / "a" / "run_manifest.json"));
  EXPECT_EQ(manifest["artifacts"]["labels.ndjson"], hex64(file_checksum(f.root / "a" / "labels.ndjson")));
}

TEST(Pipeline, EvalOfGroundTruthMapsIsPerfect) {
  const auto f = make_fixture("pl_eval");
  const std::string c = "--config " + f.config.string();
  ASSERT_EQ(cli("run " + c), 0);
  const fs::path out = f.root / "out";
  for (const auto& e : fs::directory_iterator(f.data / "gt")) {
    fs::copy_file(e.path(), out / "maps" / e.path().filename(), fs::copy_options::overwrite_existing);
  }
  // Ground-truth novel ids line up with predicted ids when k_pred equals k_novel.
  auto cluster = ojson::parse(slurp(out / "cluster.json"));
  cluster["k_pred"] = 4;
  spit(out / "cluster.json", cluster.dump());
  ASSERT_EQ(cli("eval " + c), 0);
  const auto report = ojson::parse(slurp(out / "eval_report.json"));
  EXPECT_EQ(report["miou_avg"].get<double>(), 1.0);
}

TEST(Pipeline, InMemoryMatchesFiles) {
  const auto f = make_fixture("pl_mem");
  const auto cfg = load_config(f.config);
  const auto r = run_pipeline(cfg);
  const auto inst = read_instance(cfg.inputs, cfg.k_base, cfg.k_novel);
  EXPECT_EQ(from_assignments(inst, read_labels(cfg.out_dir / "labels.ndjson")), r.labels);
  ASSERT_TRUE(r.report.has_value());
  EXPECT_GT(r.report->miou_avg, 0.5);
  for (size_t i = 0; i < inst.size(); ++i) {
    EXPECT_NE(r.labels.label[i], kNovelPending);
    if (inst.is_labeled(i)) EXPECT_EQ(r.labels.label[i], *inst.masks[i].label);
  }
}

TEST(Pipeline, BaselineModeRuns) {
  const auto f = make_fixture("pl_base", {{"mode", "baseline"}});
  const auto r = run_pipeline(load_config(f.config));
  EXPECT_EQ(r.propagation.rounds, 0);
  EXPECT_GE(r.cluster.k_pred, 1);
}

TEST(Cli, SynthSameSeedSameChecksums) {
  const auto dir = testutil::scratch("cli_synth");
  spit(dir / "s.json", R"({"synth": {"total_masks": 300}})");
  const std::string c = "synth --config " + (dir / "s.json").string() + " --seed 7 --out ";
  ASSERT_EQ(cli(c + (dir / "a").string()), 0);
  ASSERT_EQ(cli(c + (dir / "b").string()), 0);
  const std::string a = slurp(dir / "a" / "synth_manifest.json");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "synth_manifest.json"));
  spit(dir / "bad.json", R"({"synth": {"nope": 1}})");
  EXPECT_EQ(cli("synth --config " + (dir / "bad.json").string() + " --out " + (dir / "c").string()), 2);
}

TEST(Cli, SlicWritesLoadableInstance) {
  const auto dir = testutil::scratch("cli_slic");
  RgbImage img(20, 24);
  for (int32_t y = 0; y < 20; ++y)
    for (int32_t x = 12; x < 24; ++x) std::fill_n(img.pixel(y, x), 3, uint8_t{200});
  write_ppm(img, dir / "in.ppm");
  ASSERT_EQ(cli("slic --image " + (dir / "in.ppm").string() + " --segments 6 --image-id 3 --out-records " +
                (dir / "records.ndjson").string() + " --out-geometries " + (dir / "geometries.ndjson").string()),
            0);
  auto paths = InstancePaths::in_directory(dir);
  paths.geometries = dir / "geometries.ndjson";
  const auto inst = read_instance(paths, 1, 1);
  EXPECT_GE(inst.size(), 1u);
  EXPECT_EQ(inst.features.cols(), 5u);
  int64_t area = 0;
  for (const auto& m : inst.masks) area += m.area;
  EXPECT_EQ(area, 20 * 24);
  EXPECT_NO_THROW(validate_instance(inst));
}
