#pragma once

// Paired dataset generation and loading.
//
// Layout under a dataset root:
//   degraded/<id>.png              8-bit RGB, occluded input
//   clean/<id>.png                 8-bit RGB, ground truth
//   alpha/<id>.png                 16-bit grey, attenuation field
//   masks/<id>_partial.png         16-bit grey, 0 or 65535
//   masks/<id>_complete.png        16-bit grey, 0 or 65535
//   manifest.json

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occlusim/image.hpp"
#include "occlusim/imaging.hpp"

namespace occlusim {

inline constexpr int kManifestVersion = 1;

enum class Split { train, test, all };

std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct PairedSample {
  std::string sample_id;
  OccluderKind kind = OccluderKind::dirt;
  Image degraded;  // [0, 1]
  Image clean;     // [0, 1]
  Map2D partial_mask;
  Map2D complete_mask;
};

struct ManifestEntry {
  std::string sample_id;
  OccluderKind kind = OccluderKind::dirt;
  int beta = 0;
  float psf_radius = 0.0f;
  uint64_t seed = 0;
  std::string base_image;
};

struct DatasetManifest {
  int version = kManifestVersion;
  int height = 64;
  int width = 64;
  uint64_t seed = 0;
  double train_fraction = 0.89;
  std::vector<DegradationSpec> specs;
  std::vector<ManifestEntry> samples;
  std::map<std::string, std::string> split;  // sample_id -> "train" | "test"

  const DegradationSpec& spec_for(OccluderKind kind) const;
  std::vector<std::string> files_for(const ManifestEntry& entry) const;  // relative paths
};

struct GenerateOptions {
  int height = 64;
  int width = 64;
  double train_fraction = 0.89;
  uint64_t seed = 0;
};

/// Writes `count_per_kind` pairs for every spec plus manifest.json into `out`.
/// Any previous dataset in `out` is replaced. Unreadable base images are skipped
/// with a warning on stderr; zero usable base images is an error.
DatasetManifest generate_dataset(const std::filesystem::path& base_images, const std::vector<DegradationSpec>& specs,
                                 int count_per_kind, const std::filesystem::path& out, const GenerateOptions& options);

DatasetManifest read_manifest(const std::filesystem::path& root);
std::string manifest_to_json(const DatasetManifest& manifest);

/// Checks that every listed file exists, every file under the layout
/// directories is listed, and the split covers all samples. Returns the list of
/// problems (empty when consistent).
std::vector<std::string> verify_manifest(const std::filesystem::path& root);

/// Samples of `split` in manifest order, optionally restricted to some kinds.
std::vector<PairedSample> load_pairs(const std::filesystem::path& root, Split split,
                                     const std::vector<OccluderKind>& kinds = {});

/// Loads, centre-crops to the target aspect and area-resamples a base image.
Image load_base_image(const std::filesystem::path& path, int height, int width);
Image resize_area(const Image& image, int height, int width);

/// Rebuilds the degraded image for a manifest entry from its stored seed and
/// spec, before 8-bit quantisation.
Image regenerate_degraded(const DatasetManifest& manifest, const ManifestEntry& entry, const Image& clean);

Image to_model_range(const Image& unit);
Image from_model_range(const Image& model);

}  // namespace occlusim
