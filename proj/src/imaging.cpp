#include "occlusim/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace occlusim {

namespace {

// Noise amplitude relative to the blob radius; shapes the blob outline.
constexpr double kOutlineNoise = 0.35;

double smoothstep01(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Bilinear value noise on a square lattice of `cell` pixels; values in [0, 1].
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int height, int width, double cell)
      : cell_(cell), nx_(static_cast<int>(std::ceil(width / cell)) + 2),
        ny_(static_cast<int>(std::ceil(height / cell)) + 2), lattice_(static_cast<size_t>(nx_) * ny_) {
    for (double& v : lattice_) v = rng.uniform();
  }

  double at(double y, double x) const {
    const double gx = std::max(0.0, x / cell_);
    const double gy = std::max(0.0, y / cell_);
    const int ix = std::min(static_cast<int>(gx), nx_ - 2);
    const int iy = std::min(static_cast<int>(gy), ny_ - 2);
    const double fx = gx - ix;
    const double fy = gy - iy;
    auto v = [&](int yy, int xx) { return lattice_[static_cast<size_t>(yy) * nx_ + xx]; };
    const double top = v(iy, ix) * (1.0 - fx) + v(iy, ix + 1) * fx;
    const double bottom = v(iy + 1, ix) * (1.0 - fx) + v(iy + 1, ix + 1) * fx;
    return top * (1.0 - fy) + bottom * fy;
  }

 private:
  double cell_;
  int nx_;
  int ny_;
  std::vector<double> lattice_;
};

void validate_spec(const DegradationSpec& spec, int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw Error("synthesize_field: dimensions must be positive");
  }
  if (spec.blob_count.lo < 0 || spec.blob_count.hi < spec.blob_count.lo) {
    throw Error("synthesize_field: blob_count range must satisfy 0 <= lo <= hi");
  }
  if (!(spec.blob_radius.lo > 0.0) || spec.blob_radius.hi < spec.blob_radius.lo) {
    throw Error("synthesize_field: blob_radius range must satisfy 0 < lo <= hi");
  }
  if (spec.blob_radius.hi > std::min(height, width)) {
    throw Error("synthesize_field: blob radius " + std::to_string(spec.blob_radius.hi) +
                " exceeds image size " + std::to_string(std::min(height, width)));
  }
  if (spec.psf_radius.lo < 0.0 || spec.psf_radius.hi < spec.psf_radius.lo) {
    throw Error("synthesize_field: psf_radius range must satisfy 0 <= lo <= hi");
  }
  if (!(spec.alpha_floor >= 0.0f && spec.alpha_floor <= 1.0f)) {
    throw Error("synthesize_field: alpha_floor must lie in [0, 1]");
  }
  if (thickness_flag(spec.kind) == 0 && spec.alpha_floor <= Thresholds{}.complete_max) {
    throw Error("synthesize_field: thin occluders need alpha_floor above the complete-occlusion threshold");
  }
}

}  // namespace

std::string_view to_string(OccluderKind kind) {
  switch (kind) {
    case OccluderKind::dirt: return "dirt";
    case OccluderKind::raindrop: return "raindrop";
    case OccluderKind::muddy_water: return "muddy_water";
    case OccluderKind::particle: return "particle";
  }
  return "unknown";
}

OccluderKind parse_kind(std::string_view name) {
  if (name == "dirt") return OccluderKind::dirt;
  if (name == "raindrop" || name == "raindrops") return OccluderKind::raindrop;
  if (name == "muddy_water" || name == "muddy") return OccluderKind::muddy_water;
  if (name == "particle" || name == "particles") return OccluderKind::particle;
  throw Error("unknown occluder kind '" + std::string(name) + "'");
}

int thickness_flag(OccluderKind kind) { return kind == OccluderKind::dirt ? 0 : 1; }

int min_kernel_size(float radius_px) {
  return 2 * static_cast<int>(std::ceil(std::max(0.0f, radius_px))) + 1;
}

double disc_rect_area(double r, double x0, double x1, double y0, double y1) {
  if (r <= 0.0) return 0.0;
  const double a = std::max(x0, -r);
  const double b = std::min(x1, r);
  if (a >= b || y0 >= y1) return 0.0;

  auto chord_half = [r](double t) { return std::sqrt(std::max(0.0, r * r - t * t)); };
  // Antiderivative of sqrt(r^2 - t^2).
  auto primitive = [r](double t) {
    const double tt = std::clamp(t, -r, r);
    return 0.5 * (tt * std::sqrt(std::max(0.0, r * r - tt * tt)) + r * r * std::asin(tt / r));
  };

  std::vector<double> cuts{a, b};
  for (double y : {y0, y1}) {
    if (std::abs(y) <= r) {
      const double t = std::sqrt(r * r - y * y);
      for (double c : {-t, t}) {
        if (c > a && c < b) cuts.push_back(c);
      }
    }
  }
  std::sort(cuts.begin(), cuts.end());

  double area = 0.0;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i];
    const double hi = cuts[i + 1];
    if (hi <= lo) continue;
    const double s = chord_half(0.5 * (lo + hi));
    const bool upper_is_arc = s < y1;
    const bool lower_is_arc = -s > y0;
    const double upper_mid = upper_is_arc ? s : y1;
    const double lower_mid = lower_is_arc ? -s : y0;
    if (upper_mid <= lower_mid) continue;
    const double arc = primitive(hi) - primitive(lo);
    const double upper = upper_is_arc ? arc : y1 * (hi - lo);
    const double lower = lower_is_arc ? -arc : y0 * (hi - lo);
    area += upper - lower;
  }
  return area;
}

PsfKernel make_disc_psf(float radius_px, int kernel_size) {
  if (!(radius_px >= 0.0f) || !std::isfinite(radius_px)) throw Error("make_disc_psf: radius must be finite and >= 0");
  const int required = min_kernel_size(radius_px);
  if (kernel_size % 2 == 0 || kernel_size < required) {
    throw Error("make_disc_psf: kernel_size " + std::to_string(kernel_size) + " too small for radius " +
                std::to_string(radius_px) + "; need an odd size >= " + std::to_string(required));
  }
  PsfKernel k;
  k.size = kernel_size;
  k.radius_px = radius_px;
  k.weights.assign(static_cast<size_t>(kernel_size) * kernel_size, 0.0f);
  const int h = kernel_size / 2;
  if (radius_px == 0.0f) {
    k.weights[static_cast<size_t>(h) * kernel_size + h] = 1.0f;
    return k;
  }
  std::vector<double> area(k.weights.size());
  double total = 0.0;
  for (int y = 0; y < kernel_size; ++y) {
    for (int x = 0; x < kernel_size; ++x) {
      const double cx = x - h;
      const double cy = y - h;
      const double v = disc_rect_area(radius_px, cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5);
      area[static_cast<size_t>(y) * kernel_size + x] = v;
      total += v;
    }
  }
  for (size_t i = 0; i < area.size(); ++i) k.weights[i] = static_cast<float>(area[i] / total);
  return k;
}

PsfKernel make_gaussian_psf(float radius_px, int kernel_size) {
  if (!(radius_px >= 0.0f) || !std::isfinite(radius_px)) throw Error("make_gaussian_psf: radius must be finite and >= 0");
  if (kernel_size % 2 == 0 || kernel_size < 1) throw Error("make_gaussian_psf: kernel_size must be odd and positive");
  PsfKernel k;
  k.size = kernel_size;
  k.radius_px = radius_px;
  k.weights.assign(static_cast<size_t>(kernel_size) * kernel_size, 0.0f);
  const int h = kernel_size / 2;
  const double sigma = radius_px / 2.0;
  if (sigma <= 0.0) {
    k.weights[static_cast<size_t>(h) * kernel_size + h] = 1.0f;
    return k;
  }
  std::vector<double> w(k.weights.size());
  double total = 0.0;
  for (int y = 0; y < kernel_size; ++y) {
    for (int x = 0; x < kernel_size; ++x) {
      const double d2 = static_cast<double>((x - h) * (x - h) + (y - h) * (y - h));
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      w[static_cast<size_t>(y) * kernel_size + x] = v;
      total += v;
    }
  }
  for (size_t i = 0; i < w.size(); ++i) k.weights[i] = static_cast<float>(w[i] / total);
  return k;
}

DegradationSpec default_spec(OccluderKind kind) {
  DegradationSpec s;
  s.kind = kind;
  switch (kind) {
    case OccluderKind::dirt:
      s.blob_count = {2, 4};
      s.blob_radius = {6.0, 14.0};
      s.alpha_floor = 0.55f;
      s.intensification = {0.62f, 0.56f, 0.48f};
      s.complete_value = {0.55f, 0.5f, 0.45f};
      break;
    case OccluderKind::raindrop:
      s.blob_count = {2, 4};
      s.blob_radius = {5.0, 11.0};
      s.alpha_floor = 0.35f;
      s.complete_value = {0.78f, 0.8f, 0.84f};
      s.intensification = {0.8f, 0.82f, 0.86f};
      break;
    case OccluderKind::muddy_water:
      s.blob_count = {1, 3};
      s.blob_radius = {6.0, 13.0};
      s.alpha_floor = 0.15f;
      s.complete_value = {0.36f, 0.27f, 0.16f};
      s.intensification = {0.42f, 0.33f, 0.22f};
      break;
    case OccluderKind::particle:
      s.blob_count = {1, 3};
      s.blob_radius = {5.0, 12.0};
      s.alpha_floor = 0.02f;
      s.complete_value = {0.08f, 0.07f, 0.06f};
      s.intensification = {0.12f, 0.11f, 0.1f};
      break;
  }
  return s;
}

void check_kind_ordering(const std::vector<DegradationSpec>& specs) {
  const std::array order = {OccluderKind::raindrop, OccluderKind::muddy_water, OccluderKind::particle};
  std::optional<float> previous;
  std::string_view previous_name;
  for (OccluderKind kind : order) {
    for (const auto& s : specs) {
      if (s.kind != kind) continue;
      const float strength = 1.0f - s.alpha_floor;
      if (previous && !(strength > *previous)) {
        throw Error("occluder ordering violated: " + std::string(to_string(kind)) +
                    " must occlude more strongly than " + std::string(previous_name));
      }
      previous = strength;
      previous_name = to_string(kind);
    }
  }
}

float margin_for_psf(float psf_radius_px) { return 1.0f + psf_radius_px; }

OcclusionField synthesize_field(const DegradationSpec& spec, int height, int width, int channels) {
  validate_spec(spec, height, width, channels);
  Rng rng(spec.seed);

  OcclusionField f;
  f.kind = spec.kind;
  f.beta = thickness_flag(spec.kind);
  f.psf_radius_px = static_cast<float>(rng.uniform(spec.psf_radius.lo, spec.psf_radius.hi));
  const double psf_span = spec.psf_radius.hi - spec.psf_radius.lo;
  // Larger blur means the glass sits closer to the lens (3-12 cm range).
  f.defocus_distance = psf_span > 0.0
                           ? static_cast<float>(12.0 - 9.0 * (f.psf_radius_px - spec.psf_radius.lo) / psf_span)
                           : 7.5f;
  f.margin_px = margin_for_psf(f.psf_radius_px);
  f.alpha = Map2D(height, width, 1.0f);
  f.complete_value.resize(channels);
  for (int c = 0; c < channels; ++c) f.complete_value[c] = spec.complete_value[c % 3];

  const double cell = std::max(4.0, spec.blob_radius.hi);
  ValueNoise outline(rng, height, width, cell);
  ValueNoise tint(rng, height, width, cell);

  const double floor = spec.alpha_floor;
  const double margin = f.margin_px;
  // The shape value below changes by at most 1 + kOutlineNoise * R / cell per
  // pixel step and smoothstep has slope <= 1.5.
  f.ramp_bound = static_cast<float>((1.0 - floor) * 1.5 * (1.0 + kOutlineNoise) / margin) + 1e-6f;

  const int count = rng.uniform_int(spec.blob_count.lo, spec.blob_count.hi);
  for (int b = 0; b < count; ++b) {
    const double cx = rng.uniform(0.0, width - 1.0);
    const double cy = rng.uniform(0.0, height - 1.0);
    double radius = rng.uniform(spec.blob_radius.lo, spec.blob_radius.hi);
    if (f.beta == 1) {
      // The pixel nearest the centre must saturate at alpha_floor.
      const double needed = (margin + std::numbers::sqrt2 / 2.0 + 1e-3) / (1.0 - kOutlineNoise / 2.0);
      radius = std::max(radius, needed);
    }
    const double amp = kOutlineNoise * std::min(radius, cell);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double dist = std::hypot(x - cx, y - cy);
        const double shape = radius - dist + amp * (outline.at(y, x) - 0.5);
        if (shape <= 0.0) continue;
        const double o = smoothstep01(shape / margin);
        const float a = static_cast<float>(floor + (1.0 - floor) * (1.0 - o));
        float& dst = f.alpha.at(y, x);
        dst = std::min(dst, a);
      }
    }
  }

  f.intensification = Image(channels, height, width);
  for (int c = 0; c < channels; ++c) {
    const double base = spec.intensification[c % 3];
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        f.intensification.at(c, y, x) =
            static_cast<float>(std::clamp(base + 0.08 * (tint.at(y, x) - 0.5), 0.0, 1.0));
      }
    }
  }
  return f;
}

PsfKernel psf_for_field(const OcclusionField& field, PsfShape shape) {
  const int size = min_kernel_size(field.psf_radius_px);
  PsfKernel k = shape == PsfShape::disc ? make_disc_psf(field.psf_radius_px, size)
                                        : make_gaussian_psf(field.psf_radius_px, size);
  k.defocus_distance = field.defocus_distance;
  return k;
}

Image convolve(const Image& image, const PsfKernel& psf) {
  require_finite(image, "convolve");
  for (float w : psf.weights) {
    if (!std::isfinite(w)) throw Error("convolve: non-finite kernel weight");
  }
  if (psf.size % 2 == 0 || psf.weights.size() != static_cast<size_t>(psf.size) * psf.size) {
    throw Error("convolve: kernel must be square with odd size");
  }
  Image out(image.channels, image.height, image.width);
  const int h = psf.half();
  std::vector<int> ry(static_cast<size_t>(image.height) + 2 * h);
  std::vector<int> rx(static_cast<size_t>(image.width) + 2 * h);
  for (int i = 0; i < static_cast<int>(ry.size()); ++i) ry[i] = reflect_index(i - h, image.height);
  for (int i = 0; i < static_cast<int>(rx.size()); ++i) rx[i] = reflect_index(i - h, image.width);

  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        double acc = 0.0;
        for (int i = 0; i < psf.size; ++i) {
          // out(y) = sum_i k(i) in(y + h - i)
          const int sy = ry[static_cast<size_t>(y + 2 * h - i)];
          for (int j = 0; j < psf.size; ++j) {
            const int sx = rx[static_cast<size_t>(x + 2 * h - j)];
            acc += static_cast<double>(psf.at(i, j)) * image.at(c, sy, sx);
          }
        }
        out.at(c, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

RegionMasks decompose_regions(const OcclusionField& field, const Thresholds& t) {
  if (!(t.complete_max >= 0.0f && t.complete_max < t.partial_max && t.partial_max <= 1.0f)) {
    throw Error("decompose_regions: thresholds must satisfy 0 <= complete < partial <= 1");
  }
  RegionMasks m;
  m.height = field.height();
  m.width = field.width();
  const size_t n = field.alpha.values.size();
  m.partial.assign(n, 0);
  m.complete.assign(n, 0);
  m.non_occluded.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const float a = field.alpha.values[i];
    if (a <= t.complete_max) {
      m.complete[i] = 1;
    } else if (a < t.partial_max) {
      m.partial[i] = 1;
    } else {
      m.non_occluded[i] = 1;
    }
  }
  return m;
}

Image degrade(const Image& clean, const OcclusionField& field, const PsfKernel& psf, const DegradeOptions& opt) {
  if (clean.height != field.height() || clean.width != field.width()) {
    throw Error("degrade: image and occlusion field dimensions differ");
  }
  if (!clean.same_shape(field.intensification)) {
    throw Error("degrade: intensification shape does not match the clean image");
  }
  if (static_cast<int>(field.complete_value.size()) != clean.channels) {
    throw Error("degrade: complete_value needs one entry per channel");
  }
  const int channels = clean.channels;
  const size_t plane = clean.plane_size();
  const auto& alpha = field.alpha.values;
  const bool blur_first = opt.order == CompositionOrder::blur_then_attenuate;

  Image out(channels, clean.height, clean.width);
  if (field.beta == 0) {
    if (blur_first) {
      const Image scene = convolve(clean, psf);
      const Image glow = convolve(field.intensification, psf);
      for (int c = 0; c < channels; ++c) {
        for (size_t i = 0; i < plane; ++i) {
          const size_t k = c * plane + i;
          out.pixels[k] = alpha[i] * scene.pixels[k] + (1.0f - alpha[i]) * glow.pixels[k];
        }
      }
    } else {
      Image scene = clean;
      Image glow = field.intensification;
      for (int c = 0; c < channels; ++c) {
        for (size_t i = 0; i < plane; ++i) {
          scene.pixels[c * plane + i] *= alpha[i];
          glow.pixels[c * plane + i] *= 1.0f - alpha[i];
        }
      }
      const Image a = convolve(scene, psf);
      const Image b = convolve(glow, psf);
      for (size_t k = 0; k < out.size(); ++k) out.pixels[k] = a.pixels[k] + b.pixels[k];
    }
  } else {
    const RegionMasks masks = decompose_regions(field, opt.thresholds);
    Image margin_scene(channels, clean.height, clean.width);  // I_p
    Image solid(channels, clean.height, clean.width);         // I_c
    for (int c = 0; c < channels; ++c) {
      for (size_t i = 0; i < plane; ++i) {
        const size_t k = c * plane + i;
        margin_scene.pixels[k] = masks.non_occluded[i] ? 0.0f : clean.pixels[k];
        solid.pixels[k] = masks.complete[i] ? field.complete_value[c] : 0.0f;
      }
    }
    const Image scene = convolve(clean, psf);
    const Image solid_blur = convolve(solid, psf);
    if (blur_first) {
      const Image margin_blur = convolve(margin_scene, psf);
      for (int c = 0; c < channels; ++c) {
        for (size_t i = 0; i < plane; ++i) {
          const size_t k = c * plane + i;
          out.pixels[k] = scene.pixels[k] + (alpha[i] - 1.0f) * margin_blur.pixels[k] + solid_blur.pixels[k];
        }
      }
    } else {
      for (int c = 0; c < channels; ++c) {
        for (size_t i = 0; i < plane; ++i) margin_scene.pixels[c * plane + i] *= alpha[i] - 1.0f;
      }
      const Image margin_blur = convolve(margin_scene, psf);
      for (size_t k = 0; k < out.size(); ++k) {
        out.pixels[k] = scene.pixels[k] + margin_blur.pixels[k] + solid_blur.pixels[k];
      }
    }
  }
  if (opt.clip) {
    for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

}  // namespace occlusim
