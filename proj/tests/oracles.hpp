#pragma once

// Independent scalar-loop reference implementations used only by the tests.
// None of these call into the library's numeric code.

#include <cmath>
#include <vector>

#include "occlusim/image.hpp"
#include "occlusim/imaging.hpp"

namespace oracle {

using occlusim::Image;

// Mirror without repeating the edge sample, by repeated folding.
inline int mirror(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

// Disc coverage of each kernel cell by sub x sub midpoint sampling, normalised.
inline std::vector<double> disc_coverage(double radius, int size, int sub) {
  std::vector<double> w(static_cast<size_t>(size) * size, 0.0);
  const double c = size / 2;
  double total = 0.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int inside = 0;
      for (int sy = 0; sy < sub; ++sy) {
        for (int sx = 0; sx < sub; ++sx) {
          const double py = y - c - 0.5 + (sy + 0.5) / sub;
          const double px = x - c - 0.5 + (sx + 0.5) / sub;
          if (px * px + py * py <= radius * radius) ++inside;
        }
      }
      w[static_cast<size_t>(y) * size + x] = static_cast<double>(inside) / (sub * sub);
      total += w[static_cast<size_t>(y) * size + x];
    }
  }
  if (total == 0.0) {
    w[static_cast<size_t>(size / 2) * size + size / 2] = 1.0;
    return w;
  }
  for (double& v : w) v /= total;
  return w;
}

// True convolution, reflect padding, double accumulation.
inline std::vector<double> convolve(const std::vector<double>& img, int h, int w, const std::vector<float>& k,
                                    int ks) {
  std::vector<double> out(img.size(), 0.0);
  const int r = ks / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j) {
          const double tap = k[static_cast<size_t>(i + r) * ks + (j + r)];
          acc += tap * img[static_cast<size_t>(mirror(y - i, h)) * w + mirror(x - j, w)];
        }
      }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

inline std::vector<double> plane(const Image& img, int c) {
  std::vector<double> p(static_cast<size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) p[static_cast<size_t>(y) * img.width + x] = img.at(c, y, x);
  }
  return p;
}

// Per-pixel, per-tap evaluation of the thin and thick formation models
// (blur applied before attenuation), clipped to [0, 1].
inline std::vector<double> degrade(const Image& clean, const occlusim::OcclusionField& f, const occlusim::PsfKernel& psf,
                                   float tau_c = 0.05f, float tau_p = 0.95f) {
  const int h = clean.height;
  const int w = clean.width;
  const int r = psf.size / 2;
  std::vector<double> out(clean.pixels.size(), 0.0);
  auto a = [&](int y, int x) { return static_cast<double>(f.alpha.values[static_cast<size_t>(y) * w + x]); };
  for (int c = 0; c < clean.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double scene = 0.0, glow = 0.0, margin = 0.0, solid = 0.0;
        for (int i = -r; i <= r; ++i) {
          for (int j = -r; j <= r; ++j) {
            const double tap = psf.weights[static_cast<size_t>(i + r) * psf.size + (j + r)];
            const int sy = mirror(y - i, h);
            const int sx = mirror(x - j, w);
            const double s = clean.at(c, sy, sx);
            scene += tap * s;
            glow += tap * f.intensification.at(c, sy, sx);
            const double as = a(sy, sx);
            if (as < tau_p) margin += tap * s;
            if (as <= tau_c) solid += tap * f.complete_value[c];
          }
        }
        double v;
        if (f.beta == 0) {
          v = a(y, x) * scene + (1.0 - a(y, x)) * glow;
        } else {
          v = scene + (a(y, x) - 1.0) * margin + solid;
        }
        out[(static_cast<size_t>(c) * h + y) * w + x] = std::fmin(1.0, std::fmax(0.0, v));
      }
    }
  }
  return out;
}

inline double psnr(const Image& x, const Image& y) {
  double se = 0.0;
  for (size_t i = 0; i < x.pixels.size(); ++i) {
    const double d = static_cast<double>(x.pixels[i]) - y.pixels[i];
    se += d * d;
  }
  return 10.0 * std::log10(1.0 / (se / x.pixels.size()));
}

// Direct 2-D windowed SSIM: every window position evaluates the full 11 x 11
// Gaussian-weighted moments.
inline double ssim(const Image& x, const Image& y) {
  const int ws = 11;
  const double sigma = 1.5;
  double g[11];
  double gs = 0.0;
  for (int i = 0; i < ws; ++i) {
    g[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * sigma * sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  const double c1 = 0.0001, c2 = 0.0009;
  double total = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    double acc = 0.0;
    int count = 0;
    for (int oy = 0; oy + ws <= x.height; ++oy) {
      for (int ox = 0; ox + ws <= x.width; ++ox) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int i = 0; i < ws; ++i) {
          for (int j = 0; j < ws; ++j) {
            const double wt = g[i] * g[j];
            const double a = x.at(c, oy + i, ox + j);
            const double b = y.at(c, oy + i, ox + j);
            mx += wt * a;
            my += wt * b;
            xx += wt * a * a;
            yy += wt * b * b;
            xy += wt * a * b;
          }
        }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        acc += (2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / x.channels;
}

// Mean of the Gaussian-smeared |x - y| map, zero outside the image.
inline double weighted_l1(const std::vector<double>& x, const std::vector<double>& y, int h, int w, double sigma,
                          int size) {
  const int r = size / 2;
  std::vector<double> g(size);
  double gs = 0.0;
  for (int i = 0; i < size; ++i) {
    g[i] = std::exp(-((i - r) * (i - r)) / (2.0 * sigma * sigma));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  double total = 0.0;
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        for (int j = -r; j <= r; ++j) {
          const int sy = py + i, sx = px + j;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          const size_t k = static_cast<size_t>(sy) * w + sx;
          acc += g[i + r] * g[j + r] * std::fabs(x[k] - y[k]);
        }
      }
      total += acc;
    }
  }
  return total / (static_cast<double>(h) * w);
}

inline Image random_image(occlusim::Rng& rng, int c, int h, int w, double lo = 0.0, double hi = 1.0) {
  Image img(c, h, w);
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

}  // namespace oracle
