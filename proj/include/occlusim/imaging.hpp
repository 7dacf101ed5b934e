#pragma once

// Forward simulator for occlusions on glass in front of a lens.
//
// Thin occluders (dirt) follow the attenuation + intensification model
//   I = alpha * (I_s * h) + (1 - alpha) * (I_o * h)
// and thick occluders (raindrops, muddy water, particles) the defocus model
//   I = I_s * h + (alpha - 1) * (I_p * h) + I_c * h
// where h is the defocus PSF of the occluding layer and `*` is convolution.
// Everything here works on the [0, 1] value range.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "occlusim/image.hpp"

namespace occlusim {

enum class OccluderKind { dirt, raindrop, muddy_water, particle };

inline constexpr std::array<OccluderKind, 4> kAllKinds = {OccluderKind::dirt, OccluderKind::raindrop,
                                                           OccluderKind::muddy_water, OccluderKind::particle};

std::string_view to_string(OccluderKind kind);
/// Accepts the canonical names plus the short alias "muddy".
OccluderKind parse_kind(std::string_view name);
/// 0 for thin occluders (dirt), 1 for thick ones.
int thickness_flag(OccluderKind kind);

enum class PsfShape { disc, gaussian };

struct PsfKernel {
  int size = 1;  // odd
  float radius_px = 0.0f;
  float defocus_distance = 0.0f;
  std::vector<float> weights;  // size * size, row-major, sums to 1

  float at(int y, int x) const { return weights[static_cast<size_t>(y) * size + x]; }
  int half() const { return size / 2; }
};

/// Smallest odd kernel that holds a disc of the given radius.
int min_kernel_size(float radius_px);

/// Anti-aliased pillbox: each cell weight is the exact area of the cell covered
/// by a disc of `radius_px` centred on the middle cell, normalised to sum 1.
PsfKernel make_disc_psf(float radius_px, int kernel_size);

/// Isotropic Gaussian with sigma = radius_px / 2, truncated to the kernel.
PsfKernel make_gaussian_psf(float radius_px, int kernel_size);

/// Exact area of the intersection of the disc x^2 + y^2 <= r^2 with the
/// rectangle [x0, x1] x [y0, y1].
double disc_rect_area(double r, double x0, double x1, double y0, double y1);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct DegradationSpec {
  OccluderKind kind = OccluderKind::dirt;
  IntRange blob_count{1, 3};
  Interval blob_radius{6.0, 14.0};  // pixels
  float alpha_floor = 0.55f;        // minimum alpha a blob reaches
  Interval psf_radius{0.5, 2.0};    // pixels
  PsfShape psf_shape = PsfShape::disc;
  std::array<float, 3> complete_value{0.5f, 0.5f, 0.5f};   // I_c colour
  std::array<float, 3> intensification{0.5f, 0.5f, 0.5f};  // I_o base colour
  uint64_t seed = 0;
};

/// Per-kind defaults at desk scale (64x64). Alpha floors are 0.55 (dirt),
/// 0.35 (raindrop), 0.15 (muddy water), 0.02 (particle).
DegradationSpec default_spec(OccluderKind kind);

/// Occlusion strength (1 - alpha_floor) must increase raindrop < muddy water
/// < particle across the given specs; throws otherwise. Kinds absent from the
/// list are ignored.
void check_kind_ordering(const std::vector<DegradationSpec>& specs);

struct OcclusionField {
  Map2D alpha;                 // attenuation ratio in [0, 1]
  Image intensification;       // I_o, C x H x W in [0, 1]
  std::vector<float> complete_value;  // I_c, one value per channel
  int beta = 0;                // 0 thin, 1 thick
  OccluderKind kind = OccluderKind::dirt;
  float psf_radius_px = 0.0f;
  float defocus_distance = 0.0f;
  float margin_px = 1.0f;      // width of the alpha ramp
  float ramp_bound = 1.0f;     // max |delta alpha| between 4-neighbours

  int height() const { return alpha.height; }
  int width() const { return alpha.width; }
  bool operator==(const OcclusionField& other) const = default;
};

/// Region thresholds on alpha: complete = alpha <= complete_max,
/// partial = complete_max < alpha < partial_max, clear otherwise.
struct Thresholds {
  float complete_max = 0.05f;
  float partial_max = 0.95f;
};

struct RegionMasks {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> partial;
  std::vector<uint8_t> complete;
  std::vector<uint8_t> non_occluded;
};

/// Width of the alpha ramp for a given defocus radius. The margin band is tied
/// to the PSF so wider blur gives softer occluder edges.
float margin_for_psf(float psf_radius_px);

/// Procedural occluder layout. Deterministic in (spec, height, width, channels).
OcclusionField synthesize_field(const DegradationSpec& spec, int height, int width, int channels);

/// Kernel matching the field's stored defocus radius.
PsfKernel psf_for_field(const OcclusionField& field, PsfShape shape = PsfShape::disc);

/// Per-channel 2-D convolution with reflect-101 padding.
Image convolve(const Image& image, const PsfKernel& psf);

enum class CompositionOrder {
  blur_then_attenuate,  // alpha * (I_s * h): alpha applied to the blurred terms
  attenuate_then_blur,  // (alpha * I_s) * h
};

struct DegradeOptions {
  CompositionOrder order = CompositionOrder::blur_then_attenuate;
  Thresholds thresholds{};
  bool clip = true;
};

Image degrade(const Image& clean, const OcclusionField& field, const PsfKernel& psf,
              const DegradeOptions& options = {});

RegionMasks decompose_regions(const OcclusionField& field, const Thresholds& thresholds = {});

}  // namespace occlusim
