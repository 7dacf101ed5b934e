#include "occlusim/losses.hpp"

#include <algorithm>
#include <cmath>

namespace occlusim {

namespace {

// Floor applied to each per-level similarity before the fractional power;
// below it the level contributes no gradient.
constexpr double kLevelFloor = 1e-4;

struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

Plane pool2(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                             p.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}

// Adds the transpose of pool2 applied to `g` into `dst`.
void pool2_transpose_add(const Plane& g, Plane& dst) {
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      const double v = 0.25 * g.at(y, x);
      dst.at(2 * y, 2 * x) += v;
      dst.at(2 * y, 2 * x + 1) += v;
      dst.at(2 * y + 1, 2 * x) += v;
      dst.at(2 * y + 1, 2 * x + 1) += v;
    }
  }
}

// Separable "valid" filtering: out(i, j) = sum_ab t[a] t[b] in(i + a, j + b).
Plane filter_valid(const Plane& in, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = in.h - k + 1;
  const int ow = in.w - k + 1;
  Plane tmp{in.h, ow, std::vector<double>(static_cast<size_t>(in.h) * ow)};
  for (int y = 0; y < in.h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int b = 0; b < k; ++b) acc += taps[b] * in.at(y, x + b);
      tmp.at(y, x) = acc;
    }
  }
  Plane out{oh, ow, std::vector<double>(static_cast<size_t>(oh) * ow)};
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int a = 0; a < k; ++a) acc += taps[a] * tmp.at(y + a, x);
      out.at(y, x) = acc;
    }
  }
  return out;
}

// Transpose of filter_valid: maps an (h-k+1) x (w-k+1) plane back to h x w.
Plane filter_valid_transpose(const Plane& g, const std::vector<double>& taps, int h, int w) {
  const int k = static_cast<int>(taps.size());
  Plane tmp{h, g.w, std::vector<double>(static_cast<size_t>(h) * g.w, 0.0)};
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      const double v = g.at(y, x);
      for (int a = 0; a < k; ++a) tmp.at(y + a, x) += taps[a] * v;
    }
  }
  Plane out{h, w, std::vector<double>(static_cast<size_t>(h) * w, 0.0)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      const double v = tmp.at(y, x);
      for (int b = 0; b < k; ++b) out.at(y, x + b) += taps[b] * v;
    }
  }
  return out;
}

struct LevelStats {
  Plane mu_x, mu_y, sxx, syy, sxy;
  Plane l, cs;
};

LevelStats level_stats(const Plane& x, const Plane& y, const std::vector<double>& taps, const LossConfig& cfg) {
  Plane xx = x, yy = y, xy = x;
  for (size_t i = 0; i < x.v.size(); ++i) {
    xx.v[i] = x.v[i] * x.v[i];
    yy.v[i] = y.v[i] * y.v[i];
    xy.v[i] = x.v[i] * y.v[i];
  }
  LevelStats s;
  s.mu_x = filter_valid(x, taps);
  s.mu_y = filter_valid(y, taps);
  s.sxx = filter_valid(xx, taps);
  s.syy = filter_valid(yy, taps);
  s.sxy = filter_valid(xy, taps);
  s.l = s.mu_x;
  s.cs = s.mu_x;
  for (size_t i = 0; i < s.mu_x.v.size(); ++i) {
    const double mx = s.mu_x.v[i];
    const double my = s.mu_y.v[i];
    s.sxx.v[i] -= mx * mx;
    s.syy.v[i] -= my * my;
    s.sxy.v[i] -= mx * my;
    s.l.v[i] = (2.0 * mx * my + cfg.c1) / (mx * mx + my * my + cfg.c1);
    s.cs.v[i] = (2.0 * s.sxy.v[i] + cfg.c2) / (s.sxx.v[i] + s.syy.v[i] + cfg.c2);
  }
  return s;
}

// Gradient of a level statistic with respect to x, given dv/d(l map) and
// dv/d(cs map) (either may be empty).
Plane level_grad(const Plane& x, const Plane& y, const LevelStats& s, const std::vector<double>& taps,
                 const LossConfig& cfg, const std::vector<double>& g_l, const std::vector<double>& g_cs) {
  const size_t n = s.mu_x.v.size();
  Plane g_mu = s.mu_x, g_exx = s.mu_x, g_exy = s.mu_x;
  for (size_t i = 0; i < n; ++i) {
    const double mx = s.mu_x.v[i];
    const double my = s.mu_y.v[i];
    const double b = s.sxx.v[i] + s.syy.v[i] + cfg.c2;
    const double d = mx * mx + my * my + cfg.c1;
    const double gcs = g_cs.empty() ? 0.0 : g_cs[i];
    const double gl = g_l.empty() ? 0.0 : g_l[i];
    const double g_sxy = gcs * 2.0 / b;
    const double g_sxx = -gcs * s.cs.v[i] / b;
    const double g_mu_from_l = gl * (2.0 * my - 2.0 * s.l.v[i] * mx) / d;
    g_mu.v[i] = g_mu_from_l - 2.0 * mx * g_sxx - my * g_sxy;
    g_exx.v[i] = g_sxx;
    g_exy.v[i] = g_sxy;
  }
  Plane out = filter_valid_transpose(g_mu, taps, x.h, x.w);
  const Plane t_xx = filter_valid_transpose(g_exx, taps, x.h, x.w);
  const Plane t_xy = filter_valid_transpose(g_exy, taps, x.h, x.w);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += 2.0 * x.v[i] * t_xx.v[i] + y.v[i] * t_xy.v[i];
  return out;
}

void check_plane_args(size_t nx, size_t ny, int height, int width, const char* what) {
  if (height <= 0 || width <= 0 || nx != static_cast<size_t>(height) * width || ny != nx) {
    throw Error(std::string(what) + ": shape mismatch");
  }
}

std::vector<double> to_unit(std::span<const float> model) {
  std::vector<double> out(model.size());
  for (size_t i = 0; i < model.size(); ++i) out[i] = 0.5 * (static_cast<double>(model[i]) + 1.0);
  return out;
}

std::vector<double> to_double(std::span<const float> v) { return {v.begin(), v.end()}; }

}  // namespace

void LossConfig::validate() const {
  if (!(alpha0 >= 0.0 && alpha0 <= 1.0)) throw Error("loss config: alpha0 must lie in [0, 1]");
  if (!(alpha_joint >= 0.0 && alpha_joint <= 1.0)) throw Error("loss config: alpha_joint must lie in [0, 1]");
  if (msssim_levels < 1 || msssim_levels > 5) throw Error("loss config: msssim_levels must lie in [1, 5]");
  if (msssim_window < 1 || msssim_window % 2 == 0) throw Error("loss config: msssim_window must be odd");
  if (!(msssim_sigma > 0.0)) throw Error("loss config: msssim_sigma must be positive");
  if (!(gaussian_weight_sigma >= 0.0)) throw Error("loss config: gaussian_weight_sigma must be >= 0");
  if (!(c1 > 0.0 && c2 > 0.0)) throw Error("loss config: stability constants must be positive");
}

std::vector<double> msssim_weights(int levels) {
  static constexpr double kCanonical[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  if (levels < 1 || levels > 5) throw Error("msssim_weights: levels must lie in [1, 5]");
  std::vector<double> w(kCanonical, kCanonical + levels);
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

int max_msssim_levels(int height, int width, int window) {
  int levels = 0;
  int m = std::min(height, width);
  while (m >= window && levels < 5) {
    ++levels;
    m /= 2;
  }
  return levels;
}

std::vector<double> gaussian_taps(int size, double sigma) {
  std::vector<double> t(size, 0.0);
  const int r = size / 2;
  if (sigma <= 0.0) {
    t[r] = 1.0;
    return t;
  }
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    t[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2.0 * sigma * sigma));
    total += t[i];
  }
  for (double& v : t) v /= total;
  return t;
}

double ms_ssim_plane(std::span<const double> x, std::span<const double> y, int height, int width,
                     const LossConfig& cfg, std::span<double> grad_x) {
  check_plane_args(x.size(), y.size(), height, width, "ms_ssim");
  const int levels = cfg.msssim_levels;
  const int max_levels = max_msssim_levels(height, width, cfg.msssim_window);
  if (levels > max_levels) {
    throw Error("ms_ssim: " + std::to_string(height) + "x" + std::to_string(width) + " images support at most " +
                std::to_string(max_levels) + " levels with window " + std::to_string(cfg.msssim_window));
  }
  const std::vector<double> taps = gaussian_taps(cfg.msssim_window, cfg.msssim_sigma);
  const std::vector<double> weights = msssim_weights(levels);

  std::vector<Plane> px{Plane{height, width, {x.begin(), x.end()}}};
  std::vector<Plane> py{Plane{height, width, {y.begin(), y.end()}}};
  for (int j = 1; j < levels; ++j) {
    px.push_back(pool2(px.back()));
    py.push_back(pool2(py.back()));
  }

  std::vector<LevelStats> stats;
  std::vector<double> values(levels);
  double result = 1.0;
  for (int j = 0; j < levels; ++j) {
    stats.push_back(level_stats(px[j], py[j], taps, cfg));
    const LevelStats& s = stats.back();
    double acc = 0.0;
    for (size_t i = 0; i < s.cs.v.size(); ++i) acc += (j == levels - 1) ? s.l.v[i] * s.cs.v[i] : s.cs.v[i];
    values[j] = acc / static_cast<double>(s.cs.v.size());
    result *= std::pow(std::max(values[j], kLevelFloor), weights[j]);
  }
  if (grad_x.empty()) return result;
  if (grad_x.size() != x.size()) throw Error("ms_ssim: gradient buffer has the wrong size");

  // Coarsest to finest so pooled gradients can be pushed down one level.
  Plane carry;
  for (int j = levels - 1; j >= 0; --j) {
    const LevelStats& s = stats[j];
    const size_t n = s.cs.v.size();
    Plane g{px[j].h, px[j].w, std::vector<double>(px[j].v.size(), 0.0)};
    if (values[j] > kLevelFloor) {
      const double dv = result * weights[j] / values[j] / static_cast<double>(n);
      std::vector<double> g_l, g_cs(n);
      if (j == levels - 1) {
        g_l.resize(n);
        for (size_t i = 0; i < n; ++i) {
          g_l[i] = dv * s.cs.v[i];
          g_cs[i] = dv * s.l.v[i];
        }
      } else {
        std::fill(g_cs.begin(), g_cs.end(), dv);
      }
      g = level_grad(px[j], py[j], s, taps, cfg, g_l, g_cs);
    }
    if (j < levels - 1) pool2_transpose_add(carry, g);
    carry = std::move(g);
  }
  std::copy(carry.v.begin(), carry.v.end(), grad_x.begin());
  return result;
}

double weighted_l1_plane(std::span<const double> x, std::span<const double> y, int height, int width,
                         const LossConfig& cfg, std::span<double> grad_x) {
  check_plane_args(x.size(), y.size(), height, width, "weighted_l1");
  const size_t n = x.size();
  // mean(K * e) with zero padding equals mean(e * m), m(p) being the kernel
  // mass that lands inside the image when centred on p.
  std::vector<double> mass_y(height, 1.0), mass_x(width, 1.0);
  if (cfg.gaussian_weighted_l1 && cfg.gaussian_weight_sigma > 0.0) {
    const std::vector<double> taps = gaussian_taps(cfg.msssim_window, cfg.gaussian_weight_sigma);
    const int r = cfg.msssim_window / 2;
    auto mass = [&](int p, int len) {
      double acc = 0.0;
      for (int t = 0; t < cfg.msssim_window; ++t) {
        const int q = p + t - r;
        if (q >= 0 && q < len) acc += taps[t];
      }
      return acc;
    };
    for (int i = 0; i < height; ++i) mass_y[i] = mass(i, height);
    for (int i = 0; i < width; ++i) mass_x[i] = mass(i, width);
  }
  if (!grad_x.empty() && grad_x.size() != n) throw Error("weighted_l1: gradient buffer has the wrong size");
  double acc = 0.0;
  for (int yy = 0; yy < height; ++yy) {
    for (int xx = 0; xx < width; ++xx) {
      const size_t i = static_cast<size_t>(yy) * width + xx;
      const double m = mass_y[yy] * mass_x[xx];
      const double d = x[i] - y[i];
      acc += std::abs(d) * m;
      if (!grad_x.empty()) grad_x[i] = (d > 0.0 ? m : (d < 0.0 ? -m : 0.0)) / static_cast<double>(n);
    }
  }
  return acc / static_cast<double>(n);
}

double joint_loss(double primary, double auxiliary, const LossConfig& cfg) {
  return cfg.alpha_joint * primary + (1.0 - cfg.alpha_joint) * auxiliary;
}

LossResult branch_loss_planes(std::span<const double> pred, std::span<const double> target, int planes, int height,
                              int width, const LossConfig& cfg, bool want_grad) {
  cfg.validate();
  const size_t plane = static_cast<size_t>(height) * width;
  if (planes <= 0 || pred.size() != plane * planes || target.size() != pred.size()) {
    throw Error("branch_loss: shape mismatch");
  }
  LossResult r;
  if (want_grad) r.grad.assign(pred.size(), 0.0);
  std::vector<double> xu(plane), yu(plane), g_ms(want_grad ? plane : 0), g_l1(want_grad ? plane : 0);
  for (int p = 0; p < planes; ++p) {
    const auto xs = pred.subspan(p * plane, plane);
    const auto ys = target.subspan(p * plane, plane);
    for (size_t i = 0; i < plane; ++i) {
      xu[i] = 0.5 * (xs[i] + 1.0);
      yu[i] = 0.5 * (ys[i] + 1.0);
    }
    const double ms = ms_ssim_plane(xu, yu, height, width, cfg, g_ms);
    const double l1 = weighted_l1_plane(xs, ys, height, width, cfg, g_l1);
    r.ms_ssim += ms / planes;
    r.l1 += l1 / planes;
    if (want_grad) {
      for (size_t i = 0; i < plane; ++i) {
        // d(1 - ms)/dx_model = -0.5 * d(ms)/dx_unit
        r.grad[p * plane + i] = (-cfg.alpha0 * 0.5 * g_ms[i] + (1.0 - cfg.alpha0) * g_l1[i]) / planes;
      }
    }
  }
  r.value = cfg.alpha0 * (1.0 - r.ms_ssim) + (1.0 - cfg.alpha0) * r.l1;
  return r;
}

LossResult branch_loss(const nn::Tensor& pred, const nn::Tensor& target, const LossConfig& cfg, bool want_grad) {
  if (!pred.same_shape(target)) throw Error("branch_loss: shape mismatch");
  return branch_loss_planes(to_double(pred.data), to_double(target.data), pred.n * pred.c, pred.h, pred.w, cfg,
                            want_grad);
}

double ms_ssim(const Image& x, const Image& y, const LossConfig& cfg) {
  require_same_shape(x, y, "ms_ssim");
  cfg.validate();
  double acc = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    acc += ms_ssim_plane(to_unit(x.plane(c)), to_unit(y.plane(c)), x.height, x.width, cfg);
  }
  return acc / x.channels;
}

double weighted_l1(const Image& x, const Image& y, const LossConfig& cfg) {
  require_same_shape(x, y, "weighted_l1");
  double acc = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    acc += weighted_l1_plane(to_double(x.plane(c)), to_double(y.plane(c)), x.height, x.width, cfg);
  }
  return acc / x.channels;
}

double branch_loss(const Image& pred, const Image& target, const LossConfig& cfg) {
  require_same_shape(pred, target, "branch_loss");
  return branch_loss_planes(to_double(pred.pixels), to_double(target.pixels), pred.channels, pred.height, pred.width,
                            cfg, false)
      .value;
}

}  // namespace occlusim
