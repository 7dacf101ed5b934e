#include "occlusim/adaptation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "occlusim/adam.hpp"

namespace occlusim {

namespace {

bool is_mask_projection(const std::string& name) { return name.rfind("mask", 0) == 0; }

}  // namespace

std::string_view to_string(AdaptScope scope) {
  return scope == AdaptScope::all_params ? "all_params" : "shared_and_heads";
}

AdaptScope parse_adapt_scope(std::string_view name) {
  if (name == "all_params") return AdaptScope::all_params;
  if (name == "shared_and_heads") return AdaptScope::shared_and_heads;
  throw Error("unknown adaptation scope '" + std::string(name) + "'");
}

void AdaptConfig::validate() const {
  if (n_updates < 0) throw Error("adapt config: n_updates must be >= 0");
  if (!(learning_rate >= 0.0)) throw Error("adapt config: learning_rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw Error("adapt config: Adam betas must lie in [0, 1)");
  }
  loss.validate();
}

AdaptResult adapt_and_infer(const Image& degraded, const ParamSet& base, const AdaptConfig& config,
                            const Image* clean, bool keep_step_outputs) {
  config.validate();
  if (degraded.channels != base.config.in_channels) throw Error("adapt: channel count does not match the network");
  check_input_dims(base.config, degraded.height, degraded.width);
  if (clean) require_same_shape(degraded, *clean, "adapt: ground truth");

  ParamSet theta = base;  // private copy
  ParamSet grads = theta.zeros_like();
  Adam::Filter trainable;
  if (config.scope == AdaptScope::shared_and_heads) {
    trainable = [](ParamGroup, const std::string& name) { return !is_mask_projection(name); };
  }
  Adam adam(theta, {config.learning_rate, config.adam_beta1, config.adam_beta2}, trainable);
  const GradTarget target{&grads, trainable};

  const nn::Tensor x = nn::stack({&degraded});
  const Image clean_unit = clean ? from_model_range(*clean) : Image();

  AdaptResult result;
  for (int k = 0; k <= config.n_updates; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool update = k < config.n_updates;
    nn::Graph g;
    const auto xv = g.constant(x);
    for (auto& [name, t] : grads.shared) std::fill(t.data.begin(), t.data.end(), 0.0f);
    for (auto& [name, t] : grads.primary_head) std::fill(t.data.begin(), t.data.end(), 0.0f);
    for (auto& [name, t] : grads.auxiliary_head) std::fill(t.data.begin(), t.data.end(), 0.0f);
    const GraphOutputs out = build_forward(g, theta, xv, {.with_auxiliary = true}, update ? target : GradTarget{});
    const LossResult la = branch_loss(g.value(out.auxiliary), x, config.loss, update);
    result.trace.auxiliary_loss.push_back(la.value);

    Image primary = clip_model_range(nn::unstack(g.value(out.primary), 0));
    const bool finite = std::isfinite(la.value) &&
                        std::all_of(primary.pixels.begin(), primary.pixels.end(), [](float v) { return std::isfinite(v); });
    if (!finite) {
      result.trace.fell_back = true;
      result.trace.fallback_step = k;
      result.trace.step_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      break;
    }
    if (clean) result.trace.psnr_db.push_back(psnr(from_model_range(primary), clean_unit).db);
    if (keep_step_outputs) result.step_outputs.push_back(primary);
    if (update) {
      auto& gv = g.grad(out.auxiliary).data;
      for (size_t i = 0; i < gv.size(); ++i) gv[i] = static_cast<float>(la.grad[i]);
      g.backward();
      adam.step(theta, grads);
    } else {
      result.restored = std::move(primary);
    }
    result.trace.step_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }

  if (result.trace.fell_back) {
    result.restored = forward_primary(degraded, base);
    // Later steps would have produced the same fallback output.
    if (keep_step_outputs) result.step_outputs.resize(config.n_updates + 1, result.restored);
    const size_t len = static_cast<size_t>(config.n_updates) + 1;
    result.trace.auxiliary_loss.resize(len, std::numeric_limits<double>::quiet_NaN());
    if (clean) {
      const double base_psnr = psnr(from_model_range(result.restored), clean_unit).db;
      result.trace.psnr_db.resize(len, base_psnr);
    }
    result.trace.step_seconds.resize(len, 0.0);
  }
  return result;
}

std::string adapted_variant(int n) { return "adapted-" + std::to_string(n); }

SweepResult evaluate_with_adaptation(const std::vector<PairedSample>& samples, const ParamSet& base,
                                     const AdaptConfig& config, const std::vector<int>& sweep) {
  if (samples.empty()) throw Error("evaluate_with_adaptation: no samples");
  if (sweep.empty()) throw Error("evaluate_with_adaptation: empty sweep");
  for (int n : sweep) {
    if (n < 0) throw Error("evaluate_with_adaptation: sweep values must be >= 0");
  }
  const int n_max = *std::max_element(sweep.begin(), sweep.end());
  AdaptConfig cfg = config;
  cfg.n_updates = n_max;

  SweepResult result;
  result.sweep = sweep;
  std::vector<std::vector<MetricRecord>> per_n(sweep.size());
  for (const auto& s : samples) {
    try {
      const Image x = to_model_range(s.degraded);
      const Image y = to_model_range(s.clean);
      AdaptResult a = adapt_and_infer(x, base, cfg, &y, true);
      for (size_t i = 0; i < sweep.size(); ++i) {
        const Image out = from_model_range(a.step_outputs[sweep[i]]);
        per_n[i].push_back(measure(s, out, adapted_variant(sweep[i])));
      }
      result.traces.emplace_back(s.sample_id, std::move(a.trace));
    } catch (const std::exception& e) {
      for (size_t i = 0; i < sweep.size(); ++i) {
        MetricRecord r;
        r.sample_id = s.sample_id;
        r.kind = s.kind;
        r.variant = adapted_variant(sweep[i]);
        r.psnr_db = r.ssim = std::numeric_limits<double>::quiet_NaN();
        r.failed = true;
        r.error = e.what();
        per_n[i].push_back(std::move(r));
      }
    }
  }
  for (size_t i = 0; i < sweep.size(); ++i) {
    SweepRow row;
    row.n = sweep[i];
    auto summary = summarize(per_n[i], adapted_variant(sweep[i]));
    row.overall = summary.back();
    summary.pop_back();
    row.per_kind = std::move(summary);
    result.rows.push_back(std::move(row));
    result.records.insert(result.records.end(), per_n[i].begin(), per_n[i].end());
  }
  return result;
}

}  // namespace occlusim
