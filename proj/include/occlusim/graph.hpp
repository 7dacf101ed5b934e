#pragma once

// Minimal reverse-mode tape for the restoration network. Only the operations
// the network needs are provided; everything is NCHW float32 and single
// threaded, so results are bitwise reproducible on one platform.

#include <functional>
#include <vector>

#include "occlusim/image.hpp"

namespace occlusim::nn {

struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

  size_t size() const { return data.size(); }
  size_t sample_size() const { return static_cast<size_t>(c) * h * w; }
  size_t plane_size() const { return static_cast<size_t>(h) * w; }
  float* sample(int i) { return data.data() + i * sample_size(); }
  const float* sample(int i) const { return data.data() + i * sample_size(); }
  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

/// Stacks equally sized images into a batch.
Tensor stack(const std::vector<const Image*>& images);
Image unstack(const Tensor& t, int index);

class Graph {
 public:
  using Var = int;

  /// Input with no gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient is added into `grad_sink` (same size) during
  /// backward(); pass nullptr for a frozen parameter.
  Var parameter(const Tensor& value, std::vector<float>* grad_sink);

  /// 2-D cross-correlation, weight (Cout, Cin, k, k), bias (Cout, 1, 1, 1),
  /// zero padding k / 2.
  Var conv2d(Var x, Var weight, Var bias, int stride);
  Var leaky_relu(Var x, float slope);
  Var sigmoid(Var x);
  Var add(Var a, Var b);
  /// x * m with m of one channel broadcast over x's channels.
  Var mul_map(Var x, Var m);
  Var concat(Var a, Var b);
  Var upsample2(Var x);
  Var avgpool2(Var x);

  const Tensor& value(Var v) const { return nodes_[v].value; }
  bool needs_grad(Var v) const { return nodes_[v].needs_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(Var v);

  /// Propagates seeded gradients back to the parameter sinks.
  void backward();

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor value, bool needs_grad);
  bool has_grad(Var v) const { return !nodes_[v].grad.data.empty(); }

  std::vector<Node> nodes_;
};

}  // namespace occlusim::nn
