#include "occlusim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "occlusim/png_io.hpp"

namespace occlusim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kLayoutDirs[] = {"degraded", "clean", "alpha", "masks"};

json spec_to_json(const DegradationSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"blob_count", {s.blob_count.lo, s.blob_count.hi}},
              {"blob_radius", {s.blob_radius.lo, s.blob_radius.hi}},
              {"alpha_floor", s.alpha_floor},
              {"psf_radius", {s.psf_radius.lo, s.psf_radius.hi}},
              {"psf_shape", s.psf_shape == PsfShape::disc ? "disc" : "gaussian"},
              {"complete_value", s.complete_value},
              {"intensification", s.intensification}};
}

DegradationSpec spec_from_json(const json& j) {
  DegradationSpec s;
  s.kind = parse_kind(j.at("kind").get<std::string>());
  s.blob_count = {j.at("blob_count").at(0).get<int>(), j.at("blob_count").at(1).get<int>()};
  s.blob_radius = {j.at("blob_radius").at(0).get<double>(), j.at("blob_radius").at(1).get<double>()};
  s.alpha_floor = j.at("alpha_floor").get<float>();
  s.psf_radius = {j.at("psf_radius").at(0).get<double>(), j.at("psf_radius").at(1).get<double>()};
  s.psf_shape = j.at("psf_shape").get<std::string>() == "gaussian" ? PsfShape::gaussian : PsfShape::disc;
  s.complete_value = j.at("complete_value").get<std::array<float, 3>>();
  s.intensification = j.at("intensification").get<std::array<float, 3>>();
  return s;
}

Map2D mask_map(const std::vector<uint8_t>& mask, int h, int w) {
  Map2D m(h, w);
  for (size_t i = 0; i < mask.size(); ++i) m.values[i] = mask[i] ? 1.0f : 0.0f;
  return m;
}

uint64_t sample_seed(uint64_t seed, OccluderKind kind, int index) {
  return hash_combine(hash_combine(seed, fnv1a(to_string(kind))), static_cast<uint64_t>(index));
}

std::string sample_id_for(OccluderKind kind, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05d", std::string(to_string(kind)).c_str(), index);
  return buf;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::all: return "all";
  }
  return "all";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  if (name == "all") return Split::all;
  throw Error("unknown split '" + std::string(name) + "'");
}

const DegradationSpec& DatasetManifest::spec_for(OccluderKind kind) const {
  for (const auto& s : specs) {
    if (s.kind == kind) return s;
  }
  throw Error("manifest has no spec for kind " + std::string(to_string(kind)));
}

std::vector<std::string> DatasetManifest::files_for(const ManifestEntry& e) const {
  return {"degraded/" + e.sample_id + ".png", "clean/" + e.sample_id + ".png", "alpha/" + e.sample_id + ".png",
          "masks/" + e.sample_id + "_partial.png", "masks/" + e.sample_id + "_complete.png"};
}

Image resize_area(const Image& image, int height, int width) {
  if (height <= 0 || width <= 0) throw Error("resize_area: target dimensions must be positive");
  Image out(image.channels, height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double y0 = y * sy;
    const double y1 = (y + 1) * sy;
    for (int x = 0; x < width; ++x) {
      const double x0 = x * sx;
      const double x1 = (x + 1) * sx;
      for (int c = 0; c < image.channels; ++c) {
        double acc = 0.0;
        double wsum = 0.0;
        for (int iy = static_cast<int>(std::floor(y0)); iy < std::min<int>(image.height, std::ceil(y1)); ++iy) {
          const double wy = std::min<double>(y1, iy + 1) - std::max<double>(y0, iy);
          if (wy <= 0.0) continue;
          for (int ix = static_cast<int>(std::floor(x0)); ix < std::min<int>(image.width, std::ceil(x1)); ++ix) {
            const double wx = std::min<double>(x1, ix + 1) - std::max<double>(x0, ix);
            if (wx <= 0.0) continue;
            acc += wy * wx * image.at(c, iy, ix);
            wsum += wy * wx;
          }
        }
        out.at(c, y, x) = static_cast<float>(acc / wsum);
      }
    }
  }
  return out;
}

Image load_base_image(const fs::path& path, int height, int width) {
  const Image full = read_png_rgb(path);
  const double target = static_cast<double>(width) / height;
  int ch = full.height;
  int cw = full.width;
  if (static_cast<double>(cw) / ch > target) {
    cw = std::max(1, static_cast<int>(std::lround(ch * target)));
  } else {
    ch = std::max(1, static_cast<int>(std::lround(cw / target)));
  }
  const int oy = (full.height - ch) / 2;
  const int ox = (full.width - cw) / 2;
  Image crop(full.channels, ch, cw);
  for (int c = 0; c < full.channels; ++c) {
    for (int y = 0; y < ch; ++y) {
      for (int x = 0; x < cw; ++x) crop.at(c, y, x) = full.at(c, oy + y, ox + x);
    }
  }
  return resize_area(crop, height, width);
}

Image regenerate_degraded(const DatasetManifest& manifest, const ManifestEntry& entry, const Image& clean) {
  DegradationSpec spec = manifest.spec_for(entry.kind);
  spec.seed = entry.seed;
  const OcclusionField field = synthesize_field(spec, manifest.height, manifest.width, clean.channels);
  return degrade(clean, field, psf_for_field(field, spec.psf_shape));
}

std::string manifest_to_json(const DatasetManifest& m) {
  json samples = json::array();
  for (const auto& e : m.samples) {
    samples.push_back(json{{"sample_id", e.sample_id},
                           {"kind", to_string(e.kind)},
                           {"beta", e.beta},
                           {"psf_radius", e.psf_radius},
                           {"seed", e.seed},
                           {"base_image", e.base_image}});
  }
  json specs = json::array();
  for (const auto& s : m.specs) specs.push_back(spec_to_json(s));
  json j{{"version", m.version},
         {"resolution", {m.height, m.width}},
         {"value_range", {0.0, 1.0}},
         {"seed", m.seed},
         {"train_fraction", m.train_fraction},
         {"specs", specs},
         {"samples", samples},
         {"split", m.split}};
  return j.dump(2) + "\n";
}

DatasetManifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw Error("missing manifest " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("malformed manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw Error("unsupported manifest version " + std::to_string(m.version) + " in " + path.string());
    }
    m.height = j.at("resolution").at(0).get<int>();
    m.width = j.at("resolution").at(1).get<int>();
    m.seed = j.at("seed").get<uint64_t>();
    m.train_fraction = j.at("train_fraction").get<double>();
    for (const auto& s : j.at("specs")) m.specs.push_back(spec_from_json(s));
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.sample_id = s.at("sample_id").get<std::string>();
      e.kind = parse_kind(s.at("kind").get<std::string>());
      e.beta = s.at("beta").get<int>();
      e.psf_radius = s.at("psf_radius").get<float>();
      e.seed = s.at("seed").get<uint64_t>();
      e.base_image = s.at("base_image").get<std::string>();
      m.samples.push_back(std::move(e));
    }
    m.split = j.at("split").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw Error("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

DatasetManifest generate_dataset(const fs::path& base_images, const std::vector<DegradationSpec>& specs,
                                 int count_per_kind, const fs::path& out, const GenerateOptions& options) {
  if (count_per_kind < 0) throw Error("generate_dataset: count_per_kind must be >= 0");
  if (!(options.train_fraction >= 0.0 && options.train_fraction <= 1.0)) {
    throw Error("generate_dataset: train_fraction must lie in [0, 1]");
  }
  if (!fs::is_directory(base_images)) throw Error("base image directory not found: " + base_images.string());

  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(base_images)) {
    if (entry.is_regular_file()) candidates.push_back(entry.path());
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::pair<std::string, Image>> bases;
  for (const auto& path : candidates) {
    try {
      bases.emplace_back(path.filename().string(), load_base_image(path, options.height, options.width));
    } catch (const Error& e) {
      std::cerr << "warning: skipping base image: " << e.what() << "\n";
    }
  }
  if (bases.empty()) throw Error("no usable base images in " + base_images.string());

  DatasetManifest m;
  m.height = options.height;
  m.width = options.width;
  m.seed = options.seed;
  m.train_fraction = options.train_fraction;
  m.specs = specs;

  fs::create_directories(out);
  for (const char* dir : kLayoutDirs) fs::remove_all(out / dir);
  fs::remove(out / "manifest.json");
  if (count_per_kind > 0) {
    for (const char* dir : kLayoutDirs) fs::create_directories(out / dir);
  }

  for (const auto& base_spec : specs) {
    for (int i = 0; i < count_per_kind; ++i) {
      ManifestEntry e;
      e.kind = base_spec.kind;
      e.sample_id = sample_id_for(base_spec.kind, i);
      e.seed = sample_seed(options.seed, base_spec.kind, i);
      e.beta = thickness_flag(base_spec.kind);
      const auto& [base_name, clean] = bases[splitmix64(e.seed) % bases.size()];
      e.base_image = base_name;

      DegradationSpec spec = base_spec;
      spec.seed = e.seed;
      const OcclusionField field = synthesize_field(spec, m.height, m.width, clean.channels);
      e.psf_radius = field.psf_radius_px;
      const Image degraded = degrade(clean, field, psf_for_field(field, spec.psf_shape));
      const RegionMasks masks = decompose_regions(field);

      write_png_rgb8(out / "degraded" / (e.sample_id + ".png"), degraded);
      write_png_rgb8(out / "clean" / (e.sample_id + ".png"), clean);
      write_png_gray16(out / "alpha" / (e.sample_id + ".png"), field.alpha);
      write_png_gray16(out / "masks" / (e.sample_id + "_partial.png"), mask_map(masks.partial, m.height, m.width));
      write_png_gray16(out / "masks" / (e.sample_id + "_complete.png"), mask_map(masks.complete, m.height, m.width));
      m.samples.push_back(std::move(e));
    }
  }

  // Rank samples by a hash of their id; the first round(f * N) train.
  std::vector<std::pair<uint64_t, std::string>> ranked;
  for (const auto& e : m.samples) ranked.emplace_back(splitmix64(fnv1a(e.sample_id)), e.sample_id);
  std::sort(ranked.begin(), ranked.end());
  const size_t n_train = static_cast<size_t>(std::llround(options.train_fraction * ranked.size()));
  for (size_t i = 0; i < ranked.size(); ++i) m.split[ranked[i].second] = i < n_train ? "train" : "test";

  std::ofstream(out / "manifest.json") << manifest_to_json(m);
  return m;
}

std::vector<std::string> verify_manifest(const fs::path& root) {
  std::vector<std::string> problems;
  const DatasetManifest m = read_manifest(root);
  std::set<std::string> listed;
  std::set<std::string> ids;
  for (const auto& e : m.samples) {
    if (!ids.insert(e.sample_id).second) problems.push_back("duplicate sample id " + e.sample_id);
    auto it = m.split.find(e.sample_id);
    if (it == m.split.end()) {
      problems.push_back("no split label for " + e.sample_id);
    } else if (it->second != "train" && it->second != "test") {
      problems.push_back("bad split label '" + it->second + "' for " + e.sample_id);
    }
    for (const auto& rel : m.files_for(e)) {
      listed.insert(rel);
      if (!fs::is_regular_file(root / rel)) problems.push_back("missing file " + (root / rel).string());
    }
  }
  for (const auto& [id, label] : m.split) {
    if (!ids.count(id)) problems.push_back("split label for unknown sample " + id);
  }
  for (const char* dir : kLayoutDirs) {
    if (!fs::is_directory(root / dir)) continue;
    for (const auto& entry : fs::directory_iterator(root / dir)) {
      const std::string rel = std::string(dir) + "/" + entry.path().filename().string();
      if (!listed.count(rel)) problems.push_back("unlisted file " + (root / rel).string());
    }
  }
  return problems;
}

std::vector<PairedSample> load_pairs(const fs::path& root, Split split, const std::vector<OccluderKind>& kinds) {
  const DatasetManifest m = read_manifest(root);
  std::vector<PairedSample> out;
  for (const auto& e : m.samples) {
    if (!kinds.empty() && std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end()) continue;
    if (split != Split::all) {
      auto it = m.split.find(e.sample_id);
      if (it == m.split.end()) throw Error("manifest has no split label for " + e.sample_id);
      if (it->second != to_string(split)) continue;
    }
    const auto files = m.files_for(e);
    for (const auto& rel : files) {
      if (!fs::is_regular_file(root / rel)) throw Error("missing file referenced by manifest: " + (root / rel).string());
    }
    PairedSample s;
    s.sample_id = e.sample_id;
    s.kind = e.kind;
    s.degraded = read_png_rgb(root / files[0]);
    s.clean = read_png_rgb(root / files[1]);
    s.partial_mask = read_png_gray(root / files[3]);
    s.complete_mask = read_png_gray(root / files[4]);
    if (!s.degraded.same_shape(s.clean) || s.degraded.height != m.height || s.degraded.width != m.width) {
      throw Error("image dimensions disagree with manifest resolution for " + e.sample_id);
    }
    out.push_back(std::move(s));
  }
  return out;
}

Image to_model_range(const Image& unit) {
  Image out = unit;
  for (float& v : out.pixels) {
    if (!(v >= -1e-6f && v <= 1.0f + 1e-6f)) throw Error("to_model_range: value outside [0, 1]");
    v = 2.0f * v - 1.0f;
  }
  return out;
}

Image from_model_range(const Image& model) {
  Image out = model;
  for (float& v : out.pixels) {
    if (!(v >= -1.0f - 1e-6f && v <= 1.0f + 1e-6f)) throw Error("from_model_range: value outside [-1, 1]");
    v = 0.5f * (v + 1.0f);
  }
  return out;
}

}  // namespace occlusim
