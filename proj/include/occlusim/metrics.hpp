#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "occlusim/data.hpp"
#include "occlusim/network.hpp"

namespace occlusim {

inline constexpr double kPsnrCapDb = 100.0;

struct PsnrResult {
  double db = 0.0;
  bool capped = false;
};

/// 10 log10(range^2 / MSE); identical inputs are capped at 100 dB.
PsnrResult psnr(const Image& x, const Image& y, double data_range = 1.0);

/// Single-scale SSIM (11x11 Gaussian window, sigma 1.5, valid positions,
/// K1 0.01, K2 0.03) averaged over channels. Inputs in [0, 1].
double ssim(const Image& x, const Image& y);

struct MetricRecord {
  std::string sample_id;
  OccluderKind kind = OccluderKind::dirt;
  std::string variant;
  double psnr_db = 0.0;
  bool psnr_capped = false;
  double ssim = 0.0;
  bool failed = false;
  std::string error;
};

struct SummaryRow {
  std::string group;  // kind name or "overall"
  std::string variant;
  int count = 0;      // successful records
  int failures = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct EvalResult {
  std::vector<MetricRecord> records;
  std::vector<SummaryRow> summary;
};

/// Maps a sample to a restored image in [0, 1].
using Pipeline = std::function<Image(const PairedSample&)>;

Pipeline identity_pipeline();
Pipeline model_pipeline(const ParamSet& params);

MetricRecord measure(const PairedSample& sample, const Image& output, const std::string& variant);

/// Runs the pipeline on every sample. Failing samples get NaN metrics and are
/// excluded from the summary means.
EvalResult evaluate(const std::vector<PairedSample>& samples, const Pipeline& pipeline, const std::string& variant);

/// Per-kind means (kinds in canonical order) followed by the overall mean.
std::vector<SummaryRow> summarize(const std::vector<MetricRecord>& records, const std::string& variant);

/// Mosaic layout: a header strip of kGridHeader rows, then one row per sample
/// holding GT | input | output separated by kGridPad pixels, with kGridPad
/// pixels between rows and around the border.
inline constexpr int kGridPad = 4;
inline constexpr int kGridHeader = 12;

struct GridSize {
  int height = 0;
  int width = 0;
};
GridSize grid_size(int rows, int tile_height, int tile_width);

/// Builds the mosaic (values in [0, 1]) and writes it as an 8-bit PNG.
Image build_grid(const std::vector<PairedSample>& samples, const std::vector<Image>& outputs);
void emit_grid(const std::vector<PairedSample>& samples, const std::vector<Image>& outputs,
               const std::filesystem::path& path);

}  // namespace occlusim
