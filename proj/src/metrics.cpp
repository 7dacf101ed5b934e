#include "occlusim/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "occlusim/losses.hpp"
#include "occlusim/png_io.hpp"

namespace occlusim {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

// Valid-mode separable filter of a plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> rows(static_cast<size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += taps[t] * in[static_cast<size_t>(y) * w + x + t];
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += taps[t] * rows[static_cast<size_t>(y + t) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double ssim_plane(std::span<const float> xs, std::span<const float> ys, int h, int w,
                  const std::vector<double>& taps) {
  const size_t n = xs.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    x[i] = xs[i];
    y[i] = ys[i];
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, taps);
  const auto my = filter_valid(y, h, w, taps);
  const auto sxx = filter_valid(xx, h, w, taps);
  const auto syy = filter_valid(yy, h, w, taps);
  const auto sxy = filter_valid(xy, h, w, taps);
  double total = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cxy = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + kSsimC1) * (2.0 * cxy + kSsimC2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + kSsimC1) * (vx + vy + kSsimC2));
  }
  return total / static_cast<double>(mx.size());
}

// 3x5 glyphs for the grid header, one bit per pixel, rows top to bottom.
std::array<uint8_t, 5> glyph(char c) {
  switch (c) {
    case 'G': return {0b111, 0b100, 0b101, 0b101, 0b111};
    case 'T': return {0b111, 0b010, 0b010, 0b010, 0b010};
    case 'I': return {0b111, 0b010, 0b010, 0b010, 0b111};
    case 'N': return {0b101, 0b111, 0b111, 0b111, 0b101};
    case 'P': return {0b111, 0b101, 0b111, 0b100, 0b100};
    case 'U': return {0b101, 0b101, 0b101, 0b101, 0b111};
    case 'O': return {0b111, 0b101, 0b101, 0b101, 0b111};
    default: return {0, 0, 0, 0, 0};
  }
}

void draw_label(Image& img, int top, int left, int max_width, const std::string& text) {
  constexpr int kScale = 2;
  int x0 = left;
  for (char c : text) {
    const auto g = glyph(c);
    for (int gy = 0; gy < 5; ++gy) {
      for (int gx = 0; gx < 3; ++gx) {
        if (!((g[gy] >> (2 - gx)) & 1)) continue;
        for (int sy = 0; sy < kScale; ++sy) {
          for (int sx = 0; sx < kScale; ++sx) {
            const int y = top + gy * kScale + sy;
            const int x = x0 + gx * kScale + sx;
            if (y < 0 || y >= img.height || x < left || x >= left + max_width || x >= img.width) continue;
            for (int ch = 0; ch < img.channels; ++ch) img.at(ch, y, x) = 1.0f;
          }
        }
      }
    }
    x0 += 4 * kScale;
  }
}

}  // namespace

PsnrResult psnr(const Image& x, const Image& y, double data_range) {
  require_same_shape(x, y, "psnr");
  if (!(data_range > 0.0)) throw Error("psnr: data_range must be positive");
  if (x.size() == 0) throw Error("psnr: empty image");
  double se = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x.pixels[i]) - static_cast<double>(y.pixels[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.size());
  if (mse == 0.0) return {kPsnrCapDb, true};
  const double db = 10.0 * std::log10(data_range * data_range / mse);
  if (db >= kPsnrCapDb) return {kPsnrCapDb, true};
  return {db, false};
}

double ssim(const Image& x, const Image& y) {
  require_same_shape(x, y, "ssim");
  if (x.height < kSsimWindow || x.width < kSsimWindow) {
    throw Error("ssim: image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                " is smaller than the 11x11 window");
  }
  const auto taps = gaussian_taps(kSsimWindow, kSsimSigma);
  double total = 0.0;
  for (int c = 0; c < x.channels; ++c) total += ssim_plane(x.plane(c), y.plane(c), x.height, x.width, taps);
  return total / x.channels;
}

Pipeline identity_pipeline() {
  return [](const PairedSample& s) { return s.degraded; };
}

Pipeline model_pipeline(const ParamSet& params) {
  return [params](const PairedSample& s) {
    return from_model_range(forward_primary(to_model_range(s.degraded), params));
  };
}

MetricRecord measure(const PairedSample& sample, const Image& output, const std::string& variant) {
  MetricRecord r;
  r.sample_id = sample.sample_id;
  r.kind = sample.kind;
  r.variant = variant;
  const PsnrResult p = psnr(output, sample.clean);
  r.psnr_db = p.db;
  r.psnr_capped = p.capped;
  r.ssim = ssim(output, sample.clean);
  return r;
}

EvalResult evaluate(const std::vector<PairedSample>& samples, const Pipeline& pipeline, const std::string& variant) {
  if (samples.empty()) throw Error("evaluate: no samples");
  EvalResult result;
  for (const auto& s : samples) {
    try {
      result.records.push_back(measure(s, pipeline(s), variant));
    } catch (const std::exception& e) {
      MetricRecord r;
      r.sample_id = s.sample_id;
      r.kind = s.kind;
      r.variant = variant;
      r.psnr_db = std::numeric_limits<double>::quiet_NaN();
      r.ssim = std::numeric_limits<double>::quiet_NaN();
      r.failed = true;
      r.error = e.what();
      result.records.push_back(std::move(r));
    }
  }
  result.summary = summarize(result.records, variant);
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records, const std::string& variant) {
  std::vector<SummaryRow> rows;
  auto accumulate = [&](const std::string& group, auto&& include) {
    SummaryRow row;
    row.group = group;
    row.variant = variant;
    bool any = false;
    for (const auto& r : records) {
      if (!include(r)) continue;
      any = true;
      if (r.failed) {
        ++row.failures;
        continue;
      }
      ++row.count;
      row.psnr_db += r.psnr_db;
      row.ssim += r.ssim;
    }
    if (!any) return;
    if (row.count > 0) {
      row.psnr_db /= row.count;
      row.ssim /= row.count;
    } else {
      row.psnr_db = row.ssim = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(row);
  };
  for (OccluderKind k : kAllKinds) {
    accumulate(std::string(to_string(k)), [k](const MetricRecord& r) { return r.kind == k; });
  }
  accumulate("overall", [](const MetricRecord&) { return true; });
  return rows;
}

GridSize grid_size(int rows, int tile_height, int tile_width) {
  return {kGridHeader + kGridPad + rows * (tile_height + kGridPad), kGridPad + 3 * (tile_width + kGridPad)};
}

Image build_grid(const std::vector<PairedSample>& samples, const std::vector<Image>& outputs) {
  if (samples.empty()) throw Error("emit_grid: no samples");
  if (samples.size() != outputs.size()) throw Error("emit_grid: samples and outputs differ in length");
  const int th = samples.front().clean.height;
  const int tw = samples.front().clean.width;
  const GridSize size = grid_size(static_cast<int>(samples.size()), th, tw);
  Image grid(3, size.height, size.width, 0.0f);
  const char* labels[3] = {"GT", "INPUT", "OUTPUT"};
  for (int col = 0; col < 3; ++col) {
    draw_label(grid, 1, kGridPad + col * (tw + kGridPad), tw, labels[col]);
  }
  for (size_t r = 0; r < samples.size(); ++r) {
    const Image* tiles[3] = {&samples[r].clean, &samples[r].degraded, &outputs[r]};
    const int top = kGridHeader + kGridPad + static_cast<int>(r) * (th + kGridPad);
    for (int col = 0; col < 3; ++col) {
      const Image& t = *tiles[col];
      if (t.height != th || t.width != tw) throw Error("emit_grid: tile sizes differ");
      const int left = kGridPad + col * (tw + kGridPad);
      for (int c = 0; c < 3; ++c) {
        const int src_c = t.channels == 1 ? 0 : c;
        for (int y = 0; y < th; ++y) {
          for (int x = 0; x < tw; ++x) grid.at(c, top + y, left + x) = t.at(src_c, y, x);
        }
      }
    }
  }
  return grid;
}

void emit_grid(const std::vector<PairedSample>& samples, const std::vector<Image>& outputs,
               const std::filesystem::path& path) {
  const Image grid = build_grid(samples, outputs);
  write_png_rgb8(path, grid);
}

}  // namespace occlusim
