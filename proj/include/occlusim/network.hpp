#pragma once

// Two-branch occlusion removal network.
//
// Layer table (c_l = base_channels * 2^l, l = 0 .. scales-1, every conv 3x3
// unless noted, LeakyReLU after every conv except mask projections and the
// last conv of each head):
//
//   shared (theta)
//     enc0.conv_a   in_channels        -> c_0
//     enc0.conv_b   c_0                -> c_0
//     encL.down     c_{L-1}            -> c_L      stride 2
//     encL.conv_a   c_L + c_{L-1}      -> c_L      (second input: recurrent features)
//     encL.conv_b   c_L                -> c_L
//     decL.conv_a   c_{L+1} + c_L      -> c_L      (nearest upsample + skip)
//     decL.conv_b   c_L                -> c_L
//   primary head (theta_p)
//     prim.conv_a   c_0                -> c_0
//     prim.conv_b   c_0                -> in_channels   output = input + this
//   auxiliary head (theta_a)
//     maskL.proj    c_L                -> 1        1x1, sigmoid
//     aux.conv_a    c_0 + in_channels  -> c_0      (decoder features + primary output)
//     aux.conv_b    c_0                -> in_channels
//
// Feature recurrence runs the trunk first on the 2x average-pooled input; its
// decoder features at level L feed the encoder of the full-resolution pass at
// level L+1. With recurrence disabled those inputs are zero.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occlusim/graph.hpp"
#include "occlusim/image.hpp"

namespace occlusim {

struct NetworkConfig {
  int scales = 3;
  int base_channels = 16;
  int in_channels = 3;
  float activation_slope = 0.1f;
  bool mask_enabled = true;
  bool residual_enabled = true;
  bool feature_recurrence_enabled = true;
  /// Per-scale mask toggles, index = decoder level; empty means all on.
  std::vector<bool> mask_scales;

  int channels_at(int level) const { return base_channels << level; }
  bool mask_at(int level) const;
  /// Spatial dims must be multiples of this.
  int required_multiple() const;
  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

enum class ParamGroup { shared, primary, auxiliary };
std::string_view to_string(ParamGroup group);

struct ParamSet {
  using Arrays = std::map<std::string, nn::Tensor>;

  int version = 1;
  NetworkConfig config;
  Arrays shared;
  Arrays primary_head;
  Arrays auxiliary_head;

  Arrays& group(ParamGroup g);
  const Arrays& group(ParamGroup g) const;
  const nn::Tensor& at(const std::string& name) const;
  nn::Tensor& at(const std::string& name);
  ParamGroup group_of(const std::string& name) const;

  size_t count() const;
  /// FNV-1a over names, shapes and raw bytes.
  uint64_t hash() const;
  ParamSet zeros_like() const;
  bool all_finite() const;

  void for_each(const std::function<void(ParamGroup, const std::string&, const nn::Tensor&)>& fn) const;
  void for_each(const std::function<void(ParamGroup, const std::string&, nn::Tensor&)>& fn);
};

struct LayerShape {
  std::string name;  // without ".w" / ".b"
  ParamGroup group;
  int out_channels;
  int in_channels;
  int kernel;
};

/// The documented layer table for a config.
std::vector<LayerShape> layer_table(const NetworkConfig& config);

/// Fan-in scaled normal weights, zero biases. Deterministic per (config, seed).
ParamSet init_params(const NetworkConfig& config, uint64_t seed);

/// Throws unless the name sets are disjoint and every array matches the layer
/// table of `params.config`.
void validate_params(const ParamSet& params);

struct ForwardOptions {
  bool with_auxiliary = false;
  /// Multiply by an all-ones map where the mask would apply (test hook).
  bool force_unit_mask = false;
};

struct GraphOutputs {
  nn::Graph::Var primary = -1;    // unclipped
  nn::Graph::Var auxiliary = -1;  // only with_auxiliary
  std::vector<nn::Graph::Var> masks;  // full-resolution pass, per level (-1 if off)
};

/// Decides which parameters receive gradients. `grads` must have the layout of
/// `params`; a parameter is trainable when `trainable(group, name)` is true.
struct GradTarget {
  ParamSet* grads = nullptr;
  std::function<bool(ParamGroup, const std::string&)> trainable;
};

GraphOutputs build_forward(nn::Graph& graph, const ParamSet& params, nn::Graph::Var input,
                           const ForwardOptions& options, const GradTarget& target = {});

void check_input_dims(const NetworkConfig& config, int height, int width);

struct ForwardOutputs {
  Image primary_out;                  // clipped to [-1, 1]
  std::optional<Image> auxiliary_out;
  std::vector<Map2D> masks;           // per decoder level, empty when disabled
};

/// Inference on one image in the model range [-1, 1].
Image forward_primary(const Image& input, const ParamSet& params);
/// Returns (reconstructed input, primary output); both unclipped.
std::pair<Image, Image> forward_auxiliary(const Image& input, const ParamSet& params);
ForwardOutputs forward(const Image& input, const ParamSet& params, const ForwardOptions& options = {});

/// Attention maps from per-level decoder features: sigmoid(1x1 projection).
std::vector<nn::Tensor> compute_mask(const std::vector<nn::Tensor>& features, const ParamSet& params);

Image clip_model_range(const Image& image);

}  // namespace occlusim
