#pragma once

// MS-SSIM + Gaussian-weighted L1 losses with analytic gradients.
//
// Network outputs live in [-1, 1]; ms_ssim maps its inputs to [0, 1] before
// evaluating SSIM so the luminance term is well defined. All arithmetic is in
// double precision regardless of the input type.

#include <span>
#include <vector>

#include "occlusim/graph.hpp"
#include "occlusim/image.hpp"

namespace occlusim {

struct LossConfig {
  double alpha0 = 0.9;       // MS-SSIM vs L1 mix inside a branch loss
  double alpha_joint = 0.8;  // primary vs auxiliary mix in the joint loss
  int msssim_levels = 3;
  int msssim_window = 11;
  double msssim_sigma = 1.5;
  double gaussian_weight_sigma = 1.5;  // 0 gives plain L1
  bool gaussian_weighted_l1 = true;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;

  void validate() const;
};

/// Canonical five-level exponents truncated to `levels` and renormalised.
std::vector<double> msssim_weights(int levels);

/// Largest level count whose coarsest level still fits the window.
int max_msssim_levels(int height, int width, int window);

/// Normalised 1-D Gaussian taps, `size` odd; sigma 0 gives a delta.
std::vector<double> gaussian_taps(int size, double sigma);

/// MS-SSIM of one plane pair already in [0, 1]. When `grad_x` is non-null it
/// receives d(result)/dx. Levels = 1 yields plain SSIM.
double ms_ssim_plane(std::span<const double> x, std::span<const double> y, int height, int width,
                     const LossConfig& cfg, std::span<double> grad_x = {});

/// Mean of the Gaussian-filtered |x - y| map of one plane (zero padding);
/// `grad_x` receives d(result)/dx when non-empty.
double weighted_l1_plane(std::span<const double> x, std::span<const double> y, int height, int width,
                         const LossConfig& cfg, std::span<double> grad_x = {});

/// Image-level wrappers (model range, mean over channels).
double ms_ssim(const Image& x, const Image& y, const LossConfig& cfg);
double weighted_l1(const Image& x, const Image& y, const LossConfig& cfg);
double branch_loss(const Image& pred, const Image& target, const LossConfig& cfg);

/// alpha * primary + (1 - alpha) * auxiliary.
double joint_loss(double primary, double auxiliary, const LossConfig& cfg);

struct LossResult {
  double value = 0.0;
  double ms_ssim = 0.0;
  double l1 = 0.0;
  std::vector<double> grad;  // d(value)/d(pred), same layout as pred
};

/// Branch loss over a stack of planes: mean over planes of
/// alpha0 * (1 - ms_ssim) + (1 - alpha0) * weighted_l1.
LossResult branch_loss_planes(std::span<const double> pred, std::span<const double> target, int planes, int height,
                              int width, const LossConfig& cfg, bool want_grad);

/// Batch version used by training; inputs are model-range network tensors.
LossResult branch_loss(const nn::Tensor& pred, const nn::Tensor& target, const LossConfig& cfg, bool want_grad);

}  // namespace occlusim
