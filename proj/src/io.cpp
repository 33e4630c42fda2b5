#include "maskgcd/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "maskgcd/error.hpp"

namespace maskgcd {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  return out;
}

[[noreturn]] void format_error(const fs::path& path, size_t line, const std::string& what) {
  throw Error(ErrorCode::kFormatError,
              path.filename().string() + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
T get_int(const json& obj, const char* key, const fs::path& path, size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) {
    format_error(path, line, std::string("missing or non-integer \"") + key + "\"");
  }
  return it->get<T>();
}

json parse_line(const std::string& text, const fs::path& path, size_t line) {
  json obj = json::parse(text, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) format_error(path, line, "not a JSON object");
  return obj;
}

// Calls fn(obj, line_number) for each non-blank line.
template <typename Fn>
void for_each_ndjson(const fs::path& path, Fn&& fn) {
  std::ifstream in = open_in(path);
  std::string text;
  size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(parse_line(text, path, line), line);
  }
}

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return static_cast<T>(u);
}

std::vector<unsigned char> slurp(const fs::path& path) {
  std::ifstream in = open_in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

InstancePaths InstancePaths::in_directory(const fs::path& dir) {
  InstancePaths p{dir / "records.ndjson", dir / "features.meta.json", dir / "features.f32",
                  std::nullopt};
  if (fs::exists(dir / "geometries.ndjson")) p.geometries = dir / "geometries.ndjson";
  return p;
}

DiscoveryInstance read_instance(const InstancePaths& paths, int32_t k_base, int32_t k_novel) {
  DiscoveryInstance inst;
  inst.k_base = k_base;
  inst.k_novel = k_novel;

  for_each_ndjson(paths.records, [&](const json& obj, size_t line) {
    MaskRecord r;
    r.mask_id = get_int<int64_t>(obj, "mask_id", paths.records, line);
    r.image_id = get_int<int64_t>(obj, "image_id", paths.records, line);
    r.area = get_int<int64_t>(obj, "area", paths.records, line);
    auto bbox = obj.find("bbox");
    if (bbox == obj.end() || !bbox->is_array() || bbox->size() != 4 ||
        !std::all_of(bbox->begin(), bbox->end(), [](const json& v) { return v.is_number_integer(); })) {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": bad bbox");
    }
    r.bbox = {(*bbox)[0].get<int32_t>(), (*bbox)[1].get<int32_t>(), (*bbox)[2].get<int32_t>(),
              (*bbox)[3].get<int32_t>()};
    auto split = obj.find("split");
    if (split == obj.end() || !split->is_string()) {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": missing split");
    }
    const auto s = split->get<std::string>();
    if (s == "labeled") {
      r.split = Split::kLabeled;
    } else if (s == "unlabeled") {
      r.split = Split::kUnlabeled;
    } else {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": unknown split \"" + s + "\"");
    }
    auto label = obj.find("label");
    if (label == obj.end()) {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": missing label");
    }
    if (label->is_number_integer()) {
      r.label = label->get<int32_t>();
    } else if (!label->is_null()) {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": label must be int or null");
    }
    if (r.split == Split::kLabeled && !r.label) {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": labeled record with null label");
    }
    if (r.split == Split::kUnlabeled && r.label) {
      format_error(paths.records, line, "mask " + std::to_string(r.mask_id) + ": unlabeled record carries a label");
    }
    inst.masks.push_back(r);
  });

  std::ifstream meta_in = open_in(paths.features_meta);
  json meta = json::parse(meta_in, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) format_error(paths.features_meta, 1, "not a JSON object");
  const auto n = get_int<uint64_t>(meta, "n", paths.features_meta, 1);
  const auto d = get_int<uint64_t>(meta, "d", paths.features_meta, 1);
  if (n != inst.masks.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "meta n=" + std::to_string(n) + " but " +
                                                   std::to_string(inst.masks.size()) + " records");
  }
  const uint64_t expected = n * d * 4;
  const uint64_t actual = fs::exists(paths.features_bin) ? fs::file_size(paths.features_bin) : 0;
  if (actual != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                paths.features_bin.filename().string() + " has " + std::to_string(actual) +
                    " bytes, expected " + std::to_string(expected) + " (n=" + std::to_string(n) +
                    ", d=" + std::to_string(d) + ")");
  }
  const auto raw = slurp(paths.features_bin);
  std::vector<float> values(n * d);
  for (size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<float>(get_le<uint32_t>(raw.data() + 4 * i));
  }
  inst.features = FeatureMatrix(n, d, std::move(values));

  if (paths.geometries) {
    std::unordered_map<int64_t, size_t> index;
    for (size_t i = 0; i < inst.masks.size(); ++i) index.emplace(inst.masks[i].mask_id, i);
    inst.geometry.assign(inst.masks.size(), std::nullopt);
    std::map<int64_t, ImageInfo> images;
    for_each_ndjson(*paths.geometries, [&](const json& obj, size_t line) {
      const auto id = get_int<int64_t>(obj, "mask_id", *paths.geometries, line);
      auto it = index.find(id);
      if (it == index.end()) {
        throw Error(ErrorCode::kDanglingGeometry,
                    "geometry line " + std::to_string(line) + " names unknown mask_id " + std::to_string(id));
      }
      auto size = obj.find("size");
      auto counts = obj.find("counts");
      if (size == obj.end() || !size->is_array() || size->size() != 2 || counts == obj.end() ||
          !counts->is_array()) {
        format_error(*paths.geometries, line, "mask " + std::to_string(id) + ": bad size/counts");
      }
      RleMask rle;
      try {
        rle.height = (*size)[0].get<int32_t>();
        rle.width = (*size)[1].get<int32_t>();
        rle.counts = counts->get<std::vector<uint32_t>>();
      } catch (const json::exception&) {
        format_error(*paths.geometries, line, "mask " + std::to_string(id) + ": non-integer size/counts");
      }
      const int64_t image_id = inst.masks[it->second].image_id;
      auto [img, fresh] = images.emplace(image_id, ImageInfo{image_id, rle.height, rle.width});
      if (!fresh && (img->second.height != rle.height || img->second.width != rle.width)) {
        format_error(*paths.geometries, line,
                     "mask " + std::to_string(id) + ": size disagrees with other masks of image " +
                         std::to_string(image_id));
      }
      inst.geometry[it->second] = std::move(rle);
    });
    for (auto& [id, info] : images) inst.images.push_back(info);
  }
  return inst;
}

void write_features(const FeatureMatrix& features, const fs::path& meta, const fs::path& bin) {
  {
    std::ofstream out = open_out(meta);
    ordered_json m;
    m["n"] = features.rows();
    m["d"] = features.cols();
    out << m.dump() << '\n';
  }
  std::ofstream out = open_out(bin);
  for (float v : features.data()) put_le(out, std::bit_cast<uint32_t>(v));
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + bin.string());
}

void write_instance(const DiscoveryInstance& inst, const InstancePaths& paths) {
  {
    std::ofstream out = open_out(paths.records);
    for (const MaskRecord& r : inst.masks) {
      ordered_json o;
      o["mask_id"] = r.mask_id;
      o["image_id"] = r.image_id;
      o["area"] = r.area;
      o["bbox"] = {r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h};
      o["label"] = r.label ? json(*r.label) : json(nullptr);
      o["split"] = r.split == Split::kLabeled ? "labeled" : "unlabeled";
      out << o.dump() << '\n';
    }
  }
  write_features(inst.features, paths.features_meta, paths.features_bin);
  const bool any_geometry =
      std::any_of(inst.geometry.begin(), inst.geometry.end(), [](const auto& g) { return g.has_value(); });
  if (paths.geometries && any_geometry) {
    std::ofstream out = open_out(*paths.geometries);
    for (size_t i = 0; i < inst.size(); ++i) {
      if (!inst.has_geometry(i)) continue;
      const RleMask& g = *inst.geometry[i];
      ordered_json o;
      o["mask_id"] = inst.masks[i].mask_id;
      o["size"] = {g.height, g.width};
      o["counts"] = g.counts;
      out << o.dump() << '\n';
    }
  }
}

void write_labels(std::span<const LabelAssignment> assignments, const fs::path& path,
                  const std::string& stage) {
  std::vector<LabelAssignment> sorted(assignments.begin(), assignments.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.mask_id < b.mask_id; });
  std::ofstream out = open_out(path);
  for (const auto& a : sorted) {
    ordered_json o;
    o["mask_id"] = a.mask_id;
    o["label"] = a.label;
    o["confidence"] = a.confidence;
    if (!stage.empty()) o["stage"] = stage;
    out << o.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

std::vector<LabelAssignment> read_labels(const fs::path& path) {
  std::vector<LabelAssignment> out;
  for_each_ndjson(path, [&](const json& obj, size_t line) {
    LabelAssignment a;
    a.mask_id = get_int<int64_t>(obj, "mask_id", path, line);
    a.label = get_int<int32_t>(obj, "label", path, line);
    auto c = obj.find("confidence");
    if (c == obj.end() || !c->is_number()) format_error(path, line, "missing confidence");
    a.confidence = c->get<double>();
    out.push_back(a);
  });
  return out;
}

std::vector<LabelAssignment> to_assignments(const DiscoveryInstance& inst, const LabelState& state) {
  std::vector<LabelAssignment> out;
  out.reserve(inst.size());
  for (size_t i = 0; i < inst.size(); ++i) {
    out.push_back({inst.masks[i].mask_id, state.label[i], state.confidence[i]});
  }
  return out;
}

LabelState from_assignments(const DiscoveryInstance& inst, std::span<const LabelAssignment> assignments) {
  std::unordered_map<int64_t, const LabelAssignment*> by_id;
  for (const auto& a : assignments) by_id.emplace(a.mask_id, &a);
  LabelState s;
  s.label.resize(inst.size());
  s.confidence.resize(inst.size());
  for (size_t i = 0; i < inst.size(); ++i) {
    auto it = by_id.find(inst.masks[i].mask_id);
    if (it == by_id.end()) {
      throw Error(ErrorCode::kFormatError,
                  "labels file has no entry for mask " + std::to_string(inst.masks[i].mask_id));
    }
    s.label[i] = it->second->label;
    s.confidence[i] = it->second->confidence;
  }
  return s;
}

void write_map(const SegmentationMap& map, const fs::path& path) {
  std::ofstream out = open_out(path);
  out.write("GCDM", 4);
  put_le<uint16_t>(out, 1);
  put_le<uint16_t>(out, 0);
  put_le<uint32_t>(out, static_cast<uint32_t>(map.height));
  put_le<uint32_t>(out, static_cast<uint32_t>(map.width));
  for (uint16_t v : map.labels) put_le(out, v);
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + path.string());
}

SegmentationMap read_map(const fs::path& path, int64_t image_id) {
  const auto raw = slurp(path);
  if (raw.size() < 16 || std::memcmp(raw.data(), "GCDM", 4) != 0) {
    throw Error(ErrorCode::kFormatError, path.string() + ": missing GCDM header");
  }
  if (get_le<uint16_t>(raw.data() + 4) != 1) {
    throw Error(ErrorCode::kFormatError, path.string() + ": unsupported map version");
  }
  const auto h = get_le<uint32_t>(raw.data() + 8);
  const auto w = get_le<uint32_t>(raw.data() + 12);
  const uint64_t npix = static_cast<uint64_t>(h) * w;
  if (raw.size() != 16 + 2 * npix) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + ": " + std::to_string(raw.size()) + " bytes for " +
                    std::to_string(h) + "x" + std::to_string(w) + " raster");
  }
  SegmentationMap map(image_id, static_cast<int32_t>(h), static_cast<int32_t>(w));
  for (uint64_t p = 0; p < npix; ++p) map.labels[p] = get_le<uint16_t>(raw.data() + 16 + 2 * p);
  return map;
}

fs::path map_path(const fs::path& dir, int64_t image_id) {
  return dir / ("map_" + std::to_string(image_id) + ".u16");
}

std::vector<SegmentationMap> read_map_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIoError, dir.string() + " is not a directory");
  static const std::regex pattern(R"(map_(-?\d+)\.u16)");
  std::vector<std::pair<int64_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) found.emplace_back(std::stoll(m[1].str()), entry.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<SegmentationMap> maps;
  maps.reserve(found.size());
  for (const auto& [id, path] : found) maps.push_back(read_map(path, id));
  return maps;
}

namespace {

// Next whitespace-delimited PPM header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

RgbImage read_ppm(const fs::path& path) {
  std::ifstream in = open_in(path);
  if (ppm_token(in) != "P6") throw Error(ErrorCode::kFormatError, path.string() + ": not a P6 PPM");
  int32_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ppm_token(in));
    h = std::stoi(ppm_token(in));
    maxval = std::stoi(ppm_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kFormatError, path.string() + ": bad PPM header");
  }
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::kFormatError, path.string() + ": need positive size and maxval 255");
  }
  RgbImage img(h, w);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw Error(ErrorCode::kFormatError, path.string() + ": truncated pixel data");
  }
  return img;
}

void write_ppm(const RgbImage& image, const fs::path& path) {
  std::ofstream out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
}

}  // namespace maskgcd
