#pragma once

#include <functional>

#include "occlusim/network.hpp"

namespace occlusim {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over a ParamSet. Moments are allocated for every array; arrays for
/// which `trainable` returns false are never touched.
class Adam {
 public:
  using Filter = std::function<bool(ParamGroup, const std::string&)>;

  Adam(const ParamSet& like, AdamConfig config, Filter trainable = {});

  void step(ParamSet& params, const ParamSet& grads);
  int steps_taken() const { return t_; }

 private:
  AdamConfig config_;
  Filter trainable_;
  ParamSet m_;
  ParamSet v_;
  int t_ = 0;
};

}  // namespace occlusim
