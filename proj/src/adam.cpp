#include "occlusim/adam.hpp"

#include <cmath>

namespace occlusim {

Adam::Adam(const ParamSet& like, AdamConfig config, Filter trainable)
    : config_(config), trainable_(std::move(trainable)), m_(like.zeros_like()), v_(like.zeros_like()) {
  if (!(config_.learning_rate >= 0.0)) throw Error("adam: learning rate must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0 && config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw Error("adam: betas must lie in [0, 1)");
  }
}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double corr1 = 1.0 - std::pow(b1, t_);
  const double corr2 = 1.0 - std::pow(b2, t_);
  const double lr = config_.learning_rate;
  params.for_each([&](ParamGroup g, const std::string& name, nn::Tensor& p) {
    if (trainable_ && !trainable_(g, name)) return;
    const auto& gd = grads.at(name).data;
    auto& m = m_.at(name).data;
    auto& v = v_.at(name).data;
    for (size_t i = 0; i < p.data.size(); ++i) {
      const double gi = gd[i];
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * gi);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * gi * gi);
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      p.data[i] = static_cast<float>(p.data[i] - lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  });
}

}  // namespace occlusim
