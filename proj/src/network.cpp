#include "occlusim/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace occlusim {

using nn::Graph;
using nn::Tensor;
using Var = Graph::Var;

namespace {

struct Bound {
  Graph& graph;
  const ParamSet& params;
  const GradTarget& target;
  std::map<std::string, Var> vars;

  Var get(const std::string& name) {
    auto it = vars.find(name);
    if (it != vars.end()) return it->second;
    const ParamGroup g = params.group_of(name);
    std::vector<float>* sink = nullptr;
    if (target.grads && (!target.trainable || target.trainable(g, name))) sink = &target.grads->at(name).data;
    const Var v = graph.parameter(params.at(name), sink);
    vars.emplace(name, v);
    return v;
  }

  Var conv(Var x, const std::string& layer, int stride = 1) {
    return graph.conv2d(x, get(layer + ".w"), get(layer + ".b"), stride);
  }
  Var conv_act(Var x, const std::string& layer, int stride = 1) {
    return graph.leaky_relu(conv(x, layer, stride), params.config.activation_slope);
  }
};

struct TrunkResult {
  std::vector<Var> decoder;  // per level, after masking
  std::vector<Var> masks;
};

Var zeros_like_spatial(Graph& g, Var ref, int channels) {
  const Tensor& r = g.value(ref);
  return g.constant(Tensor(r.n, channels, r.h, r.w));
}

TrunkResult trunk(Bound& b, Var x, const std::vector<Var>& recurrent, bool force_unit_mask) {
  const NetworkConfig& cfg = b.params.config;
  Graph& g = b.graph;
  const int levels = cfg.scales;
  std::vector<Var> enc(levels);

  Var e = b.conv_act(x, "enc0.conv_a");
  enc[0] = b.conv_act(e, "enc0.conv_b");
  for (int l = 1; l < levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    Var d = b.conv_act(enc[l - 1], p + ".down", 2);
    Var r = recurrent.empty() ? zeros_like_spatial(g, d, cfg.channels_at(l - 1)) : recurrent[l - 1];
    Var in = g.concat(d, r);
    e = b.conv_act(in, p + ".conv_a");
    enc[l] = b.conv_act(e, p + ".conv_b");
  }

  TrunkResult out;
  out.decoder.assign(levels, -1);
  out.masks.assign(levels, -1);
  auto apply_mask = [&](Var feat, int level) {
    if (!cfg.mask_enabled || !cfg.mask_at(level)) return feat;
    Var m;
    if (force_unit_mask) {
      const Tensor& f = g.value(feat);
      m = g.constant(Tensor(f.n, 1, f.h, f.w, 1.0f));
    } else {
      m = g.sigmoid(b.conv(feat, "mask" + std::to_string(level) + ".proj"));
    }
    out.masks[level] = m;
    return g.mul_map(feat, m);
  };

  Var dec = apply_mask(enc[levels - 1], levels - 1);
  out.decoder[levels - 1] = dec;
  for (int l = levels - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    Var u = g.upsample2(dec);
    Var c = g.concat(u, enc[l]);
    dec = b.conv_act(c, p + ".conv_a");
    dec = b.conv_act(dec, p + ".conv_b");
    dec = apply_mask(dec, l);
    out.decoder[l] = dec;
  }
  return out;
}

void add_layer(std::vector<LayerShape>& t, std::string name, ParamGroup g, int out, int in, int k) {
  t.push_back({std::move(name), g, out, in, k});
}

}  // namespace

bool NetworkConfig::mask_at(int level) const {
  if (mask_scales.empty()) return true;
  return level < static_cast<int>(mask_scales.size()) && mask_scales[level];
}

int NetworkConfig::required_multiple() const {
  return 1 << (scales - 1 + (feature_recurrence_enabled ? 1 : 0));
}

void NetworkConfig::validate() const {
  if (scales < 1) throw Error("network config: scales must be >= 1");
  if (base_channels < 4) throw Error("network config: base_channels must be >= 4");
  if (in_channels < 1) throw Error("network config: in_channels must be >= 1");
  if (!(activation_slope >= 0.0f && activation_slope < 1.0f)) {
    throw Error("network config: activation_slope must lie in [0, 1)");
  }
  if (!mask_scales.empty() && static_cast<int>(mask_scales.size()) != scales) {
    throw Error("network config: mask_scales needs one entry per scale");
  }
}

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::shared: return "shared";
    case ParamGroup::primary: return "primary";
    case ParamGroup::auxiliary: return "auxiliary";
  }
  return "shared";
}

ParamSet::Arrays& ParamSet::group(ParamGroup g) {
  switch (g) {
    case ParamGroup::shared: return shared;
    case ParamGroup::primary: return primary_head;
    case ParamGroup::auxiliary: return auxiliary_head;
  }
  return shared;
}

const ParamSet::Arrays& ParamSet::group(ParamGroup g) const { return const_cast<ParamSet*>(this)->group(g); }

ParamGroup ParamSet::group_of(const std::string& name) const {
  if (shared.count(name)) return ParamGroup::shared;
  if (primary_head.count(name)) return ParamGroup::primary;
  if (auxiliary_head.count(name)) return ParamGroup::auxiliary;
  throw Error("unknown parameter " + name);
}

const Tensor& ParamSet::at(const std::string& name) const { return group(group_of(name)).at(name); }
Tensor& ParamSet::at(const std::string& name) { return group(group_of(name)).at(name); }

size_t ParamSet::count() const {
  size_t n = 0;
  for_each([&](ParamGroup, const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

uint64_t ParamSet::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for_each([&](ParamGroup g, const std::string& name, const Tensor& t) {
    const int gi = static_cast<int>(g);
    mix(&gi, sizeof gi);
    mix(name.data(), name.size());
    const int dims[4] = {t.n, t.c, t.h, t.w};
    mix(dims, sizeof dims);
    mix(t.data.data(), t.data.size() * sizeof(float));
  });
  return h;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  z.version = version;
  z.config = config;
  for (ParamGroup g : {ParamGroup::shared, ParamGroup::primary, ParamGroup::auxiliary}) {
    for (const auto& [name, t] : group(g)) z.group(g).emplace(name, Tensor(t.n, t.c, t.h, t.w));
  }
  return z;
}

bool ParamSet::all_finite() const {
  bool ok = true;
  for_each([&](ParamGroup, const std::string&, const Tensor& t) {
    for (float v : t.data) ok = ok && std::isfinite(v);
  });
  return ok;
}

void ParamSet::for_each(const std::function<void(ParamGroup, const std::string&, const Tensor&)>& fn) const {
  for (ParamGroup g : {ParamGroup::shared, ParamGroup::primary, ParamGroup::auxiliary}) {
    for (const auto& [name, t] : group(g)) fn(g, name, t);
  }
}

void ParamSet::for_each(const std::function<void(ParamGroup, const std::string&, Tensor&)>& fn) {
  for (ParamGroup g : {ParamGroup::shared, ParamGroup::primary, ParamGroup::auxiliary}) {
    for (auto& [name, t] : group(g)) fn(g, name, t);
  }
}

std::vector<LayerShape> layer_table(const NetworkConfig& cfg) {
  cfg.validate();
  std::vector<LayerShape> t;
  const auto S = ParamGroup::shared;
  add_layer(t, "enc0.conv_a", S, cfg.channels_at(0), cfg.in_channels, 3);
  add_layer(t, "enc0.conv_b", S, cfg.channels_at(0), cfg.channels_at(0), 3);
  for (int l = 1; l < cfg.scales; ++l) {
    const std::string p = "enc" + std::to_string(l);
    add_layer(t, p + ".down", S, cfg.channels_at(l), cfg.channels_at(l - 1), 3);
    add_layer(t, p + ".conv_a", S, cfg.channels_at(l), cfg.channels_at(l) + cfg.channels_at(l - 1), 3);
    add_layer(t, p + ".conv_b", S, cfg.channels_at(l), cfg.channels_at(l), 3);
  }
  for (int l = cfg.scales - 2; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    add_layer(t, p + ".conv_a", S, cfg.channels_at(l), cfg.channels_at(l + 1) + cfg.channels_at(l), 3);
    add_layer(t, p + ".conv_b", S, cfg.channels_at(l), cfg.channels_at(l), 3);
  }
  add_layer(t, "prim.conv_a", ParamGroup::primary, cfg.channels_at(0), cfg.channels_at(0), 3);
  add_layer(t, "prim.conv_b", ParamGroup::primary, cfg.in_channels, cfg.channels_at(0), 3);
  for (int l = 0; l < cfg.scales; ++l) {
    add_layer(t, "mask" + std::to_string(l) + ".proj", ParamGroup::auxiliary, 1, cfg.channels_at(l), 1);
  }
  add_layer(t, "aux.conv_a", ParamGroup::auxiliary, cfg.channels_at(0), cfg.channels_at(0) + cfg.in_channels, 3);
  add_layer(t, "aux.conv_b", ParamGroup::auxiliary, cfg.in_channels, cfg.channels_at(0), 3);
  return t;
}

ParamSet init_params(const NetworkConfig& config, uint64_t seed) {
  ParamSet p;
  p.config = config;
  const float slope = config.activation_slope;
  for (const auto& layer : layer_table(config)) {
    const bool linear_out = layer.kernel == 1 || layer.name == "prim.conv_b" || layer.name == "aux.conv_b";
    const double fan_in = static_cast<double>(layer.in_channels) * layer.kernel * layer.kernel;
    const double gain = linear_out ? 1.0 : 2.0 / (1.0 + slope * slope);
    // The residual head starts near the identity map.
    const double head_scale = layer.name == "prim.conv_b" ? 0.1 : 1.0;
    const double stddev = head_scale * std::sqrt(gain / fan_in);
    Tensor w(layer.out_channels, layer.in_channels, layer.kernel, layer.kernel);
    Rng rng(hash_combine(seed, fnv1a(layer.name)));
    for (float& v : w.data) v = static_cast<float>(stddev * rng.normal());
    auto& arrays = p.group(layer.group);
    arrays.emplace(layer.name + ".w", std::move(w));
    arrays.emplace(layer.name + ".b", Tensor(layer.out_channels, 1, 1, 1));
  }
  return p;
}

void validate_params(const ParamSet& params) {
  std::set<std::string> seen;
  params.for_each([&](ParamGroup, const std::string& name, const Tensor&) {
    if (!seen.insert(name).second) throw Error("parameter " + name + " appears in more than one group");
  });
  size_t expected = 0;
  for (const auto& layer : layer_table(params.config)) {
    auto check = [&](const std::string& name, int n, int c, int h, int w) {
      const auto& arrays = params.group(layer.group);
      auto it = arrays.find(name);
      if (it == arrays.end()) {
        throw Error("parameter " + name + " missing from group " + std::string(to_string(layer.group)));
      }
      const Tensor& t = it->second;
      if (t.n != n || t.c != c || t.h != h || t.w != w || t.data.size() != static_cast<size_t>(n) * c * h * w) {
        throw Error("parameter " + name + " has a shape inconsistent with the network config");
      }
      ++expected;
    };
    check(layer.name + ".w", layer.out_channels, layer.in_channels, layer.kernel, layer.kernel);
    check(layer.name + ".b", layer.out_channels, 1, 1, 1);
  }
  if (expected != seen.size()) throw Error("parameter set has arrays not in the layer table");
  if (!params.all_finite()) throw Error("parameter set contains non-finite values");
}

void check_input_dims(const NetworkConfig& config, int height, int width) {
  const int m = config.required_multiple();
  if (height % m != 0 || width % m != 0) {
    const int ph = (height + m - 1) / m * m;
    const int pw = (width + m - 1) / m * m;
    throw Error("input " + std::to_string(height) + "x" + std::to_string(width) + " is not a multiple of " +
                std::to_string(m) + "; pad to " + std::to_string(ph) + "x" + std::to_string(pw));
  }
}

GraphOutputs build_forward(Graph& graph, const ParamSet& params, Var input, const ForwardOptions& options,
                           const GradTarget& target) {
  const NetworkConfig& cfg = params.config;
  const Tensor& x = graph.value(input);
  if (x.c != cfg.in_channels) throw Error("network input has the wrong channel count");
  check_input_dims(cfg, x.h, x.w);

  Bound b{graph, params, target, {}};
  std::vector<Var> recurrent;
  if (cfg.feature_recurrence_enabled && cfg.scales > 1) {
    const Var coarse_in = graph.avgpool2(input);
    const TrunkResult coarse = trunk(b, coarse_in, {}, options.force_unit_mask);
    // Coarse decoder level l has the resolution of fine encoder level l + 1.
    recurrent.assign(coarse.decoder.begin(), coarse.decoder.end() - 1);
  }
  const TrunkResult fine = trunk(b, input, recurrent, options.force_unit_mask);
  const Var features = fine.decoder[0];

  GraphOutputs out;
  out.masks = fine.masks;
  Var residual = b.conv(b.conv_act(features, "prim.conv_a"), "prim.conv_b");
  out.primary = cfg.residual_enabled ? graph.add(input, residual) : residual;
  if (options.with_auxiliary) {
    const Var joined = graph.concat(features, out.primary);
    out.auxiliary = b.conv(b.conv_act(joined, "aux.conv_a"), "aux.conv_b");
  }
  return out;
}

Image clip_model_range(const Image& image) {
  Image out = image;
  for (float& v : out.pixels) v = std::clamp(v, -1.0f, 1.0f);
  return out;
}

ForwardOutputs forward(const Image& input, const ParamSet& params, const ForwardOptions& options) {
  Graph g;
  const Var x = g.constant(nn::stack({&input}));
  const GraphOutputs o = build_forward(g, params, x, options);
  ForwardOutputs out;
  out.primary_out = clip_model_range(nn::unstack(g.value(o.primary), 0));
  if (options.with_auxiliary) out.auxiliary_out = nn::unstack(g.value(o.auxiliary), 0);
  for (Var m : o.masks) {
    if (m < 0) {
      out.masks.emplace_back();
      continue;
    }
    const Tensor& t = g.value(m);
    Map2D map(t.h, t.w);
    std::copy(t.data.begin(), t.data.begin() + t.plane_size(), map.values.begin());
    out.masks.push_back(std::move(map));
  }
  return out;
}

Image forward_primary(const Image& input, const ParamSet& params) { return forward(input, params).primary_out; }

std::pair<Image, Image> forward_auxiliary(const Image& input, const ParamSet& params) {
  Graph g;
  const Var x = g.constant(nn::stack({&input}));
  const GraphOutputs o = build_forward(g, params, x, {.with_auxiliary = true});
  return {nn::unstack(g.value(o.auxiliary), 0), nn::unstack(g.value(o.primary), 0)};
}

std::vector<Tensor> compute_mask(const std::vector<Tensor>& features, const ParamSet& params) {
  if (static_cast<int>(features.size()) != params.config.scales) {
    throw Error("compute_mask: expected one feature map per scale");
  }
  std::vector<Tensor> out;
  for (int l = 0; l < params.config.scales; ++l) {
    Graph g;
    const std::string layer = "mask" + std::to_string(l) + ".proj";
    const Var f = g.constant(features[l]);
    const Var proj = g.conv2d(f, g.parameter(params.at(layer + ".w"), nullptr), g.parameter(params.at(layer + ".b"), nullptr), 1);
    out.push_back(g.value(g.sigmoid(proj)));
  }
  return out;
}

}  // namespace occlusim
