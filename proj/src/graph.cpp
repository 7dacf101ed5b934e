#include "occlusim/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace occlusim::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Column rows have leading dimension `ld`, so several samples can share one
// matrix side by side.
void im2col(const float* x, int cin, int h, int w, int k, int stride, int pad, int ho, int wo, float* cols,
            size_t ld) {
  for (int ci = 0; ci < cin; ++ci) {
    const float* plane = x + static_cast<size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + (static_cast<size_t>(ci) * k * k + ky * k + kx) * ld;
        // Output columns whose input column lies inside the image.
        const int lo = std::clamp((pad - kx + stride - 1) / stride, 0, wo);
        const int hi = std::clamp(floor_div(w - 1 + pad - kx, stride) + 1, lo, wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          float* dst = row + static_cast<size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<size_t>(iy) * w + kx - pad;
          std::fill(dst, dst + lo, 0.0f);
          if (stride == 1) {
            std::copy(src + lo, src + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride];
          }
          std::fill(dst + hi, dst + wo, 0.0f);
        }
      }
    }
  }
}

void col2im_add(const float* cols, int cin, int h, int w, int k, int stride, int pad, int ho, int wo, float* x,
                size_t ld) {
  for (int ci = 0; ci < cin; ++ci) {
    float* plane = x + static_cast<size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + (static_cast<size_t>(ci) * k * k + ky * k + kx) * ld;
        const int lo = std::clamp((pad - kx + stride - 1) / stride, 0, wo);
        const int hi = std::clamp(floor_div(w - 1 + pad - kx, stride) + 1, lo, wo);
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          float* dst = plane + static_cast<size_t>(iy) * w + kx - pad;
          const float* src = row + static_cast<size_t>(oy) * wo;
          for (int ox = lo; ox < hi; ++ox) dst[ox * stride] += src[ox];
        }
      }
    }
  }
}

// Grow-only per-thread buffers. Large temporaries would otherwise be mapped
// and faulted in again on every call.
// Every buffer handed to Eigen is packet-aligned: vectorized reductions peel
// leading elements by runtime address, so unaligned storage would make the
// rounding depend on heap layout rather than on shapes.
using AlignedBuffer = std::vector<float, Eigen::aligned_allocator<float>>;

float* scratch(int slot, size_t size) {
  thread_local AlignedBuffer buffers[5];
  AlignedBuffer& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b.data();
}

const float* aligned_copy(int slot, const std::vector<float>& v) {
  float* dst = scratch(slot, v.size());
  std::copy(v.begin(), v.end(), dst);
  return dst;
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(what);
}

}  // namespace

Tensor stack(const std::vector<const Image*>& images) {
  require(!images.empty(), "stack: no images");
  const Image& first = *images.front();
  Tensor t(static_cast<int>(images.size()), first.channels, first.height, first.width);
  for (size_t i = 0; i < images.size(); ++i) {
    require(images[i]->same_shape(first), "stack: images differ in shape");
    std::copy(images[i]->pixels.begin(), images[i]->pixels.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

Image unstack(const Tensor& t, int index) {
  Image img(t.c, t.h, t.w);
  std::copy(t.sample(index), t.sample(index) + t.sample_size(), img.pixels.begin());
  return img;
}

Graph::Var Graph::push(Tensor value, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  nodes_.push_back(std::move(node));
  return static_cast<Var>(nodes_.size() - 1);
}

Tensor& Graph::grad(Var v) {
  Node& node = nodes_[v];
  if (node.grad.data.empty()) {
    const Tensor& val = node.value;
    node.grad = Tensor(val.n, val.c, val.h, val.w);
  }
  return node.grad;
}

Graph::Var Graph::constant(Tensor value) { return push(std::move(value), false); }

Graph::Var Graph::parameter(const Tensor& value, std::vector<float>* grad_sink) {
  const Var v = push(value, grad_sink != nullptr);
  if (grad_sink) {
    require(grad_sink->size() == value.size(), "parameter: gradient sink size mismatch");
    nodes_[v].backward = [this, v, grad_sink] {
      const Tensor& g = nodes_[v].grad;
      for (size_t i = 0; i < g.size(); ++i) (*grad_sink)[i] += g.data[i];
    };
  }
  return v;
}

Graph::Var Graph::conv2d(Var x, Var weight, Var bias, int stride) {
  const Tensor& in = value(x);
  const Tensor& wt = value(weight);
  require(wt.h == wt.w && wt.h % 2 == 1, "conv2d: kernel must be square and odd");
  require(in.c == wt.c, "conv2d: input channels do not match the weight");
  require(value(bias).size() == static_cast<size_t>(wt.n), "conv2d: bias size mismatch");
  const int k = wt.h;
  const int pad = k / 2;
  const int ho = (in.h + 2 * pad - k) / stride + 1;
  const int wo = (in.w + 2 * pad - k) / stride + 1;
  const int cout = wt.n;
  const int kdim = in.c * k * k;
  const size_t ncols = static_cast<size_t>(ho) * wo;
  const size_t total = ncols * in.n;  // all samples side by side

  // Gathers the whole batch into one kdim x total matrix.
  auto gather_input = [](const Tensor& in, int k, int stride, int pad, int ho, int wo) {
    const size_t ncols = static_cast<size_t>(ho) * wo;
    const size_t total = ncols * in.n;
    float* cols = scratch(0, static_cast<size_t>(in.c) * k * k * total);
    for (int i = 0; i < in.n; ++i) {
      im2col(in.sample(i), in.c, in.h, in.w, k, stride, pad, ho, wo, cols + i * ncols, total);
    }
    return cols;
  };

  Tensor out(in.n, cout, ho, wo);
  {
    const float* cols = gather_input(in, k, stride, pad, ho, wo);
    MapMat y(scratch(1, cout * total), cout, static_cast<Eigen::Index>(total));
    y.noalias() = ConstMapMat(aligned_copy(3, wt.data), cout, kdim) * ConstMapMat(cols, kdim, static_cast<Eigen::Index>(total));
    const float* b = value(bias).data.data();
    for (int i = 0; i < in.n; ++i) {
      for (int co = 0; co < cout; ++co) {
        const float* src = y.data() + co * total + i * ncols;
        float* dst = out.sample(i) + co * ncols;
        for (size_t j = 0; j < ncols; ++j) dst[j] = src[j] + b[co];
      }
    }
  }
  const bool ng = needs_grad(x) || needs_grad(weight) || needs_grad(bias);
  const Var y = push(std::move(out), ng);
  if (!ng) return y;

  nodes_[y].backward = [this, x, weight, bias, y, stride, k, pad, ho, wo, cout, kdim, ncols, total, gather_input] {
    const Tensor& in = value(x);
    const Tensor& g = nodes_[y].grad;
    MapMat go(scratch(1, cout * total), cout, static_cast<Eigen::Index>(total));
    for (int i = 0; i < in.n; ++i) {
      for (int co = 0; co < cout; ++co) {
        std::copy(g.sample(i) + co * ncols, g.sample(i) + (co + 1) * ncols, go.data() + co * total + i * ncols);
      }
    }
    if (needs_grad(bias)) {
      const Eigen::VectorXf gb = go.rowwise().sum();
      float* dst = grad(bias).data.data();
      for (int co = 0; co < cout; ++co) dst[co] += gb[co];
    }
    if (needs_grad(weight)) {
      const float* cols = gather_input(in, k, stride, pad, ho, wo);
      MapMat gw(scratch(4, static_cast<size_t>(cout) * kdim), cout, kdim);
      gw.noalias() = go * ConstMapMat(cols, kdim, static_cast<Eigen::Index>(total)).transpose();
      std::vector<float>& dst = grad(weight).data;
      for (size_t j = 0; j < dst.size(); ++j) dst[j] += gw.data()[j];
    }
    if (needs_grad(x)) {
      Tensor& gx = grad(x);
      if (stride == 1) {
        // Same-size convolution of the output gradient with the flipped,
        // transposed kernel.
        const int cin = in.c;
        const int kk = k * k;
        float* flipped = scratch(3, static_cast<size_t>(cin) * cout * kk);
        const float* w = value(weight).data.data();
        for (int co = 0; co < cout; ++co) {
          for (int ci = 0; ci < cin; ++ci) {
            for (int t = 0; t < kk; ++t) {
              flipped[(static_cast<size_t>(ci) * cout + co) * kk + (kk - 1 - t)] = w[(static_cast<size_t>(co) * cin + ci) * kk + t];
            }
          }
        }
        const int gdim = cout * kk;
        float* gcols = scratch(2, static_cast<size_t>(gdim) * total);
        for (int i = 0; i < in.n; ++i) {
          im2col(g.sample(i), cout, ho, wo, k, 1, pad, ho, wo, gcols + i * ncols, total);
        }
        MapMat dx(scratch(0, static_cast<size_t>(cin) * total), cin, static_cast<Eigen::Index>(total));
        dx.noalias() = ConstMapMat(flipped, cin, gdim) * ConstMapMat(gcols, gdim, static_cast<Eigen::Index>(total));
        for (int i = 0; i < in.n; ++i) {
          for (int ci = 0; ci < cin; ++ci) {
            const float* src = dx.data() + ci * total + i * ncols;
            float* dst = gx.sample(i) + ci * ncols;
            for (size_t j = 0; j < ncols; ++j) dst[j] += src[j];
          }
        }
      } else {
        MapMat dcols(scratch(2, kdim * total), kdim, static_cast<Eigen::Index>(total));
        dcols.noalias() = ConstMapMat(aligned_copy(3, value(weight).data), cout, kdim).transpose() * go;
        for (int i = 0; i < in.n; ++i) {
          col2im_add(dcols.data() + i * ncols, in.c, in.h, in.w, k, stride, pad, ho, wo, gx.sample(i), total);
        }
      }
    }
  };
  return y;
}

Graph::Var Graph::leaky_relu(Var x, float slope) {
  Tensor out = value(x);
  for (float& v : out.data) v = v > 0.0f ? v : v * slope;
  const Var y = push(std::move(out), needs_grad(x));
  if (needs_grad(x)) {
    nodes_[y].backward = [this, x, y, slope] {
      const Tensor& in = value(x);
      const Tensor& g = nodes_[y].grad;
      Tensor& gx = grad(x);
      for (size_t i = 0; i < g.size(); ++i) gx.data[i] += in.data[i] > 0.0f ? g.data[i] : g.data[i] * slope;
    };
  }
  return y;
}

Graph::Var Graph::sigmoid(Var x) {
  Tensor out = value(x);
  for (float& v : out.data) v = 1.0f / (1.0f + std::exp(-v));
  const Var y = push(std::move(out), needs_grad(x));
  if (needs_grad(x)) {
    nodes_[y].backward = [this, x, y] {
      const Tensor& s = value(y);
      const Tensor& g = nodes_[y].grad;
      Tensor& gx = grad(x);
      for (size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * s.data[i] * (1.0f - s.data[i]);
    };
  }
  return y;
}

Graph::Var Graph::add(Var a, Var b) {
  require(value(a).same_shape(value(b)), "add: shape mismatch");
  Tensor out = value(a);
  const Tensor& vb = value(b);
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += vb.data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  const Var y = push(std::move(out), ng);
  if (ng) {
    nodes_[y].backward = [this, a, b, y] {
      const Tensor& g = nodes_[y].grad;
      for (Var v : {a, b}) {
        if (!needs_grad(v)) continue;
        Tensor& gv = grad(v);
        for (size_t i = 0; i < g.size(); ++i) gv.data[i] += g.data[i];
      }
    };
  }
  return y;
}

Graph::Var Graph::mul_map(Var x, Var m) {
  const Tensor& vx = value(x);
  const Tensor& vm = value(m);
  require(vm.c == 1 && vm.n == vx.n && vm.h == vx.h && vm.w == vx.w, "mul_map: map shape mismatch");
  Tensor out = vx;
  const size_t plane = vx.plane_size();
  for (int i = 0; i < vx.n; ++i) {
    const float* mp = vm.sample(i);
    for (int c = 0; c < vx.c; ++c) {
      float* dst = out.sample(i) + c * plane;
      for (size_t p = 0; p < plane; ++p) dst[p] *= mp[p];
    }
  }
  const bool ng = needs_grad(x) || needs_grad(m);
  const Var y = push(std::move(out), ng);
  if (ng) {
    nodes_[y].backward = [this, x, m, y, plane] {
      const Tensor& vx = value(x);
      const Tensor& vm = value(m);
      const Tensor& g = nodes_[y].grad;
      Tensor* gx = needs_grad(x) ? &grad(x) : nullptr;
      Tensor* gm = needs_grad(m) ? &grad(m) : nullptr;
      for (int i = 0; i < vx.n; ++i) {
        const float* mp = vm.sample(i);
        for (int c = 0; c < vx.c; ++c) {
          const size_t off = c * plane;
          const float* gp = g.sample(i) + off;
          if (gx) {
            float* dst = gx->sample(i) + off;
            for (size_t p = 0; p < plane; ++p) dst[p] += gp[p] * mp[p];
          }
          if (gm) {
            const float* xp = vx.sample(i) + off;
            float* dst = gm->sample(i);
            for (size_t p = 0; p < plane; ++p) dst[p] += gp[p] * xp[p];
          }
        }
      }
    };
  }
  return y;
}

Graph::Var Graph::concat(Var a, Var b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  require(va.n == vb.n && va.h == vb.h && va.w == vb.w, "concat: spatial shape mismatch");
  Tensor out(va.n, va.c + vb.c, va.h, va.w);
  for (int i = 0; i < va.n; ++i) {
    std::copy(va.sample(i), va.sample(i) + va.sample_size(), out.sample(i));
    std::copy(vb.sample(i), vb.sample(i) + vb.sample_size(), out.sample(i) + va.sample_size());
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  const Var y = push(std::move(out), ng);
  if (ng) {
    nodes_[y].backward = [this, a, b, y] {
      const Tensor& g = nodes_[y].grad;
      const size_t sa = value(a).sample_size();
      const size_t sb = value(b).sample_size();
      for (int i = 0; i < g.n; ++i) {
        if (needs_grad(a)) {
          float* dst = grad(a).sample(i);
          const float* src = g.sample(i);
          for (size_t p = 0; p < sa; ++p) dst[p] += src[p];
        }
        if (needs_grad(b)) {
          float* dst = grad(b).sample(i);
          const float* src = g.sample(i) + sa;
          for (size_t p = 0; p < sb; ++p) dst[p] += src[p];
        }
      }
    };
  }
  return y;
}

Graph::Var Graph::upsample2(Var x) {
  const Tensor& in = value(x);
  Tensor out(in.n, in.c, in.h * 2, in.w * 2);
  for (int i = 0; i < in.n; ++i) {
    for (int c = 0; c < in.c; ++c) {
      const float* src = in.sample(i) + c * in.plane_size();
      float* dst = out.sample(i) + c * out.plane_size();
      for (int y = 0; y < out.h; ++y) {
        for (int xx = 0; xx < out.w; ++xx) dst[y * out.w + xx] = src[(y / 2) * in.w + xx / 2];
      }
    }
  }
  const Var y = push(std::move(out), needs_grad(x));
  if (needs_grad(x)) {
    nodes_[y].backward = [this, x, y] {
      const Tensor& g = nodes_[y].grad;
      Tensor& gx = grad(x);
      for (int i = 0; i < g.n; ++i) {
        for (int c = 0; c < g.c; ++c) {
          const float* src = g.sample(i) + c * g.plane_size();
          float* dst = gx.sample(i) + c * gx.plane_size();
          for (int yy = 0; yy < g.h; ++yy) {
            for (int xx = 0; xx < g.w; ++xx) dst[(yy / 2) * gx.w + xx / 2] += src[yy * g.w + xx];
          }
        }
      }
    };
  }
  return y;
}

Graph::Var Graph::avgpool2(Var x) {
  const Tensor& in = value(x);
  require(in.h % 2 == 0 && in.w % 2 == 0, "avgpool2: spatial dims must be even");
  Tensor out(in.n, in.c, in.h / 2, in.w / 2);
  for (int i = 0; i < in.n; ++i) {
    for (int c = 0; c < in.c; ++c) {
      const float* src = in.sample(i) + c * in.plane_size();
      float* dst = out.sample(i) + c * out.plane_size();
      for (int y = 0; y < out.h; ++y) {
        for (int xx = 0; xx < out.w; ++xx) {
          const float* p = src + (2 * y) * in.w + 2 * xx;
          dst[y * out.w + xx] = 0.25f * (p[0] + p[1] + p[in.w] + p[in.w + 1]);
        }
      }
    }
  }
  const Var y = push(std::move(out), needs_grad(x));
  if (needs_grad(x)) {
    nodes_[y].backward = [this, x, y] {
      const Tensor& g = nodes_[y].grad;
      Tensor& gx = grad(x);
      for (int i = 0; i < g.n; ++i) {
        for (int c = 0; c < g.c; ++c) {
          const float* src = g.sample(i) + c * g.plane_size();
          float* dst = gx.sample(i) + c * gx.plane_size();
          for (int yy = 0; yy < g.h; ++yy) {
            for (int xx = 0; xx < g.w; ++xx) {
              const float v = 0.25f * src[yy * g.w + xx];
              float* p = dst + (2 * yy) * gx.w + 2 * xx;
              p[0] += v;
              p[1] += v;
              p[gx.w] += v;
              p[gx.w + 1] += v;
            }
          }
        }
      }
    };
  }
  return y;
}

void Graph::backward() {
  for (Var v = static_cast<Var>(nodes_.size()) - 1; v >= 0; --v) {
    Node& node = nodes_[v];
    if (!node.needs_grad || !node.backward || !has_grad(v)) continue;
    node.backward();
  }
}

}  // namespace occlusim::nn
