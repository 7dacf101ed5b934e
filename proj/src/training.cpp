#include "occlusim/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "occlusim/adam.hpp"
#include "occlusim/checkpoint.hpp"
#include "occlusim/report.hpp"

namespace occlusim {

namespace fs = std::filesystem;
using nn::Graph;

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (const auto& id : ids) s += (s.empty() ? "" : ",") + id;
  return s;
}

struct StepLosses {
  double joint = 0.0;
  double primary = 0.0;
  double auxiliary = std::numeric_limits<double>::quiet_NaN();
};

// One forward/backward pass; accumulates gradients into `grads`.
StepLosses run_step(const ParamSet& params, ParamSet& grads, const GradTarget& target, const nn::Tensor& degraded,
                    const nn::Tensor& clean, const LossConfig& loss, double primary_weight, double auxiliary_weight,
                    bool with_auxiliary) {
  Graph g;
  const auto x = g.constant(degraded);
  const GraphOutputs out = build_forward(g, params, x, {.with_auxiliary = with_auxiliary}, target);
  (void)grads;

  const LossResult lp = branch_loss(g.value(out.primary), clean, loss, true);
  StepLosses s;
  s.primary = lp.value;
  s.joint = primary_weight * lp.value;
  LossResult la;
  if (with_auxiliary) {
    la = branch_loss(g.value(out.auxiliary), degraded, loss, true);
    s.auxiliary = la.value;
    s.joint += auxiliary_weight * la.value;
  }
  if (!std::isfinite(s.joint)) return s;

  auto& gp = g.grad(out.primary).data;
  for (size_t i = 0; i < gp.size(); ++i) gp[i] = static_cast<float>(primary_weight * lp.grad[i]);
  if (with_auxiliary) {
    auto& ga = g.grad(out.auxiliary).data;
    for (size_t i = 0; i < ga.size(); ++i) ga[i] = static_cast<float>(auxiliary_weight * la.grad[i]);
  }
  g.backward();
  return s;
}

void zero(ParamSet& p) {
  p.for_each([](ParamGroup, const std::string&, nn::Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0f); });
}

std::pair<ParamSet, TrainReport> run_training(const std::vector<PairedSample>& dataset, const TrainConfig& cfg,
                                              bool primary_only, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ParamSet params = init_params(cfg.network, cfg.seed);

  TrainReport report;
  report.mode = primary_only ? "primary_only" : "joint";
  report.config = cfg;
  report.seed = cfg.seed;

  if (cfg.iterations > 0) {
    if (dataset.empty()) throw Error("train: dataset is empty");
    if (cfg.batch_size > static_cast<int>(dataset.size())) {
      throw Error("train: batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                  std::to_string(dataset.size()));
    }
    const Image& first = dataset.front().degraded;
    if (first.channels != cfg.network.in_channels) throw Error("train: dataset channel count does not match the network");
    check_input_dims(cfg.network, first.height, first.width);
    for (const auto& s : dataset) {
      if (!s.degraded.same_shape(first) || !s.clean.same_shape(first)) {
        throw Error("train: sample " + s.sample_id + " differs in resolution from the rest of the dataset");
      }
    }
  }

  std::vector<Image> degraded_model, clean_model;
  degraded_model.reserve(dataset.size());
  clean_model.reserve(dataset.size());
  if (cfg.iterations > 0) {
    for (const auto& s : dataset) {
      degraded_model.push_back(to_model_range(s.degraded));
      clean_model.push_back(to_model_range(s.clean));
    }
  }

  Adam::Filter trainable;
  if (primary_only) trainable = [](ParamGroup g, const std::string&) { return g != ParamGroup::auxiliary; };
  Adam adam(params, {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2}, trainable);
  ParamSet grads = params.zeros_like();
  const GradTarget target{&grads, trainable};
  const double primary_weight = primary_only ? 1.0 : cfg.loss.alpha_joint;
  const double auxiliary_weight = primary_only ? 0.0 : 1.0 - cfg.loss.alpha_joint;

  Rng order_rng(hash_combine(cfg.seed, fnv1a("batch-order")));
  std::vector<size_t> order;
  size_t cursor = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      order.resize(dataset.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      order_rng.shuffle(order);
      cursor = 0;
    }
    return order[cursor++];
  };

  Rng augment_rng(hash_combine(cfg.seed, fnv1a("augment")));
  const bool square = !dataset.empty() && dataset.front().degraded.height == dataset.front().degraded.width;
  const int transforms = square ? 8 : 4;

  if (!cfg.output_dir.empty()) fs::create_directories(cfg.output_dir);
  std::vector<Image> aug_x(cfg.batch_size), aug_y(cfg.batch_size);
  for (int it = 0; it < cfg.iterations; ++it) {
    std::vector<const Image*> xs, ys;
    std::vector<std::string> ids;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const size_t idx = next_index();
      ids.push_back(dataset[idx].sample_id);
      const int t = cfg.augment ? augment_rng.uniform_int(0, transforms - 1) : 0;
      if (t == 0) {
        xs.push_back(&degraded_model[idx]);
        ys.push_back(&clean_model[idx]);
        continue;
      }
      aug_x[b] = dihedral(degraded_model[idx], t);
      aug_y[b] = dihedral(clean_model[idx], t);
      xs.push_back(&aug_x[b]);
      ys.push_back(&aug_y[b]);
    }
    const nn::Tensor xb = nn::stack(xs);
    const nn::Tensor yb = nn::stack(ys);
    zero(grads);
    const StepLosses s =
        run_step(params, grads, target, xb, yb, cfg.loss, primary_weight, auxiliary_weight, !primary_only);
    if (!std::isfinite(s.joint)) throw TrainingError(it, ids);
    adam.step(params, grads);
    report.joint_loss.push_back(s.joint);
    report.primary_loss.push_back(s.primary);
    report.auxiliary_loss.push_back(s.auxiliary);
    if (progress) progress(it, s.joint, s.primary, s.auxiliary);

    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      if (!params.all_finite()) throw TrainingError(it, ids);
      if (!cfg.output_dir.empty()) {
        save_checkpoint(cfg.output_dir / ("checkpoint_" + std::to_string(it + 1) + ".ckpt"), params);
      }
    }
  }
  if (!params.all_finite()) throw Error("train: parameters became non-finite");

  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.output_dir.empty()) {
    const fs::path ckpt = cfg.output_dir / "model.ckpt";
    save_checkpoint(ckpt, params);
    report.final_checkpoint = ckpt.string();
    write_text(cfg.output_dir / "train_report.json", train_report_json(report));
  }
  return {std::move(params), std::move(report)};
}

}  // namespace

Image dihedral(const Image& in, int t) {
  if (t < 0 || t > 7) throw Error("dihedral: transform index must lie in 0..7");
  const bool tr = (t & 4) != 0;
  Image out(in.channels, tr ? in.width : in.height, tr ? in.height : in.width);
  for (int c = 0; c < in.channels; ++c) {
    for (int y = 0; y < in.height; ++y) {
      for (int x = 0; x < in.width; ++x) {
        const int sx = (t & 1) ? in.width - 1 - x : x;
        const int sy = (t & 2) ? in.height - 1 - y : y;
        if (tr) {
          out.at(c, x, y) = in.at(c, sy, sx);
        } else {
          out.at(c, y, x) = in.at(c, sy, sx);
        }
      }
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (iterations < 0) throw Error("train config: iterations must be >= 0");
  if (batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("train config: learning_rate must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0)) {
    throw Error("train config: Adam betas must lie in (0, 1)");
  }
  if (checkpoint_every < 0) throw Error("train config: checkpoint_every must be >= 0");
  loss.validate();
  network.validate();
}

TrainingError::TrainingError(int iteration, std::vector<std::string> batch_ids)
    : Error("non-finite loss at iteration " + std::to_string(iteration) + " (batch: " + join_ids(batch_ids) + ")"),
      iteration_(iteration), batch_ids_(std::move(batch_ids)) {}

std::pair<ParamSet, TrainReport> train(const std::vector<PairedSample>& dataset, const TrainConfig& config,
                                       const ProgressFn& progress) {
  return run_training(dataset, config, false, progress);
}

std::pair<ParamSet, TrainReport> train_primary_only(const std::vector<PairedSample>& dataset,
                                                    const TrainConfig& config, const ProgressFn& progress) {
  return run_training(dataset, config, true, progress);
}

ParamSet joint_gradient(const ParamSet& params, const std::vector<const Image*>& degraded_model,
                        const std::vector<const Image*>& clean_model, const LossConfig& loss, double primary_weight,
                        double auxiliary_weight) {
  ParamSet grads = params.zeros_like();
  const GradTarget target{&grads, {}};
  run_step(params, grads, target, nn::stack(degraded_model), nn::stack(clean_model), loss, primary_weight,
           auxiliary_weight, true);
  return grads;
}

}  // namespace occlusim
