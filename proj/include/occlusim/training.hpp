#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "occlusim/data.hpp"
#include "occlusim/losses.hpp"
#include "occlusim/network.hpp"

namespace occlusim {

struct TrainConfig {
  int iterations = 1000;  // optimizer steps
  int batch_size = 8;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  uint64_t seed = 0;
  int checkpoint_every = 0;          // 0 disables intermediate checkpoints
  bool augment = true;               // random flips/transposes per sample
  std::filesystem::path output_dir;  // empty: nothing written
  LossConfig loss;
  NetworkConfig network;

  void validate() const;
};

/// Dihedral transform `t` in 0..7 of an image: bit 0 flips x, bit 1 flips y,
/// bit 2 transposes (applied last). Used for training augmentation.
Image dihedral(const Image& in, int t);

struct TrainReport {
  std::string mode;  // "joint" or "primary_only"
  std::vector<double> joint_loss;
  std::vector<double> primary_loss;
  std::vector<double> auxiliary_loss;  // NaN in primary-only mode
  double wall_seconds = 0.0;
  std::string final_checkpoint;
  TrainConfig config;
  uint64_t seed = 0;
};

/// Raised when the loss stops being finite; names the iteration and batch.
class TrainingError : public Error {
 public:
  TrainingError(int iteration, std::vector<std::string> batch_ids);
  int iteration() const { return iteration_; }
  const std::vector<std::string>& batch_ids() const { return batch_ids_; }

 private:
  int iteration_;
  std::vector<std::string> batch_ids_;
};

using ProgressFn = std::function<void(int iteration, double joint, double primary, double auxiliary)>;

/// Joint optimisation of shared, primary and auxiliary parameters against
/// alpha * L_P + (1 - alpha) * L_A.
std::pair<ParamSet, TrainReport> train(const std::vector<PairedSample>& dataset, const TrainConfig& config,
                                       const ProgressFn& progress = {});

/// L_P only; the auxiliary group stays at its initial values.
std::pair<ParamSet, TrainReport> train_primary_only(const std::vector<PairedSample>& dataset,
                                                    const TrainConfig& config, const ProgressFn& progress = {});

/// Joint-loss gradient of one batch (used by the gradient-reach checks).
ParamSet joint_gradient(const ParamSet& params, const std::vector<const Image*>& degraded_model,
                        const std::vector<const Image*>& clean_model, const LossConfig& loss, double primary_weight,
                        double auxiliary_weight);

}  // namespace occlusim
