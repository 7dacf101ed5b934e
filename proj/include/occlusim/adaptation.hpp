#pragma once

#include <string>
#include <vector>

#include "occlusim/losses.hpp"
#include "occlusim/metrics.hpp"
#include "occlusim/network.hpp"

namespace occlusim {

enum class AdaptScope {
  all_params,        // everything the auxiliary gradient reaches
  shared_and_heads,  // leaves the attention-mask projections frozen
};

std::string_view to_string(AdaptScope scope);
AdaptScope parse_adapt_scope(std::string_view name);

struct AdaptConfig {
  int n_updates = 4;
  double learning_rate = 6e-6;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  AdaptScope scope = AdaptScope::all_params;
  LossConfig loss;

  void validate() const;
};

struct AdaptTrace {
  std::vector<double> auxiliary_loss;  // n_updates + 1 entries, step 0 first
  std::vector<double> psnr_db;         // empty without ground truth
  std::vector<double> step_seconds;
  bool fell_back = false;
  int fallback_step = -1;
};

struct AdaptResult {
  Image restored;                     // model range, clipped
  AdaptTrace trace;
  std::vector<Image> step_outputs;    // only when requested: output after k updates
};

/// Clones `base`, takes n Adam steps on the auxiliary loss of this single
/// image and returns the primary output of the adapted copy. `degraded` is in
/// the model range; `clean` (optional, model range) enables the PSNR trace.
AdaptResult adapt_and_infer(const Image& degraded, const ParamSet& base, const AdaptConfig& config,
                            const Image* clean = nullptr, bool keep_step_outputs = false);

struct SweepRow {
  int n = 0;
  SummaryRow overall;
  std::vector<SummaryRow> per_kind;
};

struct SweepResult {
  std::vector<int> sweep;
  std::vector<SweepRow> rows;
  std::vector<MetricRecord> records;  // variant "adapted-<n>"
  std::vector<std::pair<std::string, AdaptTrace>> traces;
};

/// Fresh adaptation per image; one trajectory of max(sweep) updates is run and
/// the output after each requested n is scored.
SweepResult evaluate_with_adaptation(const std::vector<PairedSample>& samples, const ParamSet& base,
                                     const AdaptConfig& config, const std::vector<int>& sweep);

std::string adapted_variant(int n);

}  // namespace occlusim
