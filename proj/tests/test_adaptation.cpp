#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "occlusim/adaptation.hpp"
#include "occlusim/data.hpp"
#include "oracles.hpp"

using namespace occlusim;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.scales = 2;
  c.base_channels = 4;
  return c;
}

AdaptConfig small_adapt(int n, double lr = 6e-6) {
  AdaptConfig a;
  a.n_updates = n;
  a.learning_rate = lr;
  a.loss.msssim_window = 5;
  a.loss.msssim_levels = 2;
  return a;
}

Image model_image(uint64_t seed) {
  Rng rng(seed);
  return oracle::random_image(rng, 3, 16, 16, -0.8, 0.8);
}

PairedSample sample(uint64_t seed, OccluderKind kind) {
  PairedSample s;
  s.sample_id = std::string(to_string(kind)) + "_" + std::to_string(seed);
  s.kind = kind;
  Rng rng(seed);
  s.clean = oracle::random_image(rng, 3, 16, 16, 0.1, 0.9);
  s.degraded = s.clean;
  for (float& v : s.degraded.pixels) v = std::clamp(v * 0.7f + 0.1f, 0.0f, 1.0f);
  return s;
}

}  // namespace

TEST(Adapt, ZeroUpdatesEqualsBase) {
  const ParamSet base = init_params(small_config(), 1);
  const Image x = model_image(2);
  const AdaptResult r = adapt_and_infer(x, base, small_adapt(0));
  EXPECT_EQ(r.restored, forward_primary(x, base));
  EXPECT_EQ(r.trace.auxiliary_loss.size(), 1u);
  EXPECT_FALSE(r.trace.fell_back);
}

TEST(Adapt, ZeroRateEqualsBaseAndConstantLoss) {
  const ParamSet base = init_params(small_config(), 1);
  const Image x = model_image(3);
  const AdaptResult r = adapt_and_infer(x, base, small_adapt(6, 0.0));
  EXPECT_EQ(r.restored, forward_primary(x, base));
  ASSERT_EQ(r.trace.auxiliary_loss.size(), 7u);
  for (double l : r.trace.auxiliary_loss) EXPECT_EQ(l, r.trace.auxiliary_loss.front());
}

TEST(Adapt, BaseUntouchedAndDeterministic) {
  const ParamSet base = init_params(small_config(), 4);
  const uint64_t h = base.hash();
  const Image x = model_image(5);
  const AdaptResult a = adapt_and_infer(x, base, small_adapt(3, 1e-3));
  const AdaptResult b = adapt_and_infer(x, base, small_adapt(3, 1e-3));
  EXPECT_EQ(base.hash(), h);
  EXPECT_EQ(a.restored, b.restored);
  EXPECT_EQ(a.trace.auxiliary_loss, b.trace.auxiliary_loss);
  EXPECT_NE(a.restored, forward_primary(x, base));
}

TEST(Adapt, Isolation) {
  const ParamSet base = init_params(small_config(), 6);
  const Image xa = model_image(7), xb = model_image(8);
  const AdaptResult b_alone = adapt_and_infer(xb, base, small_adapt(2, 1e-3));
  adapt_and_infer(xa, base, small_adapt(2, 1e-3));
  const AdaptResult b_after = adapt_and_infer(xb, base, small_adapt(2, 1e-3));
  EXPECT_EQ(b_alone.restored, b_after.restored);
}

TEST(Adapt, TraceShapeAndDescent) {
  const ParamSet base = init_params(small_config(), 9);
  const Image x = model_image(10), clean = model_image(11);
  const AdaptResult r = adapt_and_infer(x, base, small_adapt(4, 1e-3), &clean, true);
  EXPECT_EQ(r.trace.auxiliary_loss.size(), 5u);
  EXPECT_EQ(r.trace.psnr_db.size(), 5u);
  EXPECT_EQ(r.trace.step_seconds.size(), 5u);
  ASSERT_EQ(r.step_outputs.size(), 5u);
  EXPECT_EQ(r.step_outputs.back(), r.restored);
  EXPECT_EQ(r.step_outputs.front(), forward_primary(x, base));
  EXPECT_LT(r.trace.auxiliary_loss[4], r.trace.auxiliary_loss[0]);
}

TEST(Adapt, DivergenceFallsBackToBase) {
  const ParamSet base = init_params(small_config(), 12);
  const Image x = model_image(13);
  const AdaptResult r = adapt_and_infer(x, base, small_adapt(6, 1e30));
  EXPECT_TRUE(r.trace.fell_back);
  EXPECT_GE(r.trace.fallback_step, 1);
  EXPECT_EQ(r.restored, forward_primary(x, base));
  EXPECT_EQ(r.trace.auxiliary_loss.size(), 7u);
}

TEST(Adapt, RestrictedScopeDiffers) {
  const ParamSet base = init_params(small_config(), 14);
  const Image x = model_image(15);
  AdaptConfig narrow = small_adapt(2, 1e-3);
  narrow.scope = AdaptScope::shared_and_heads;
  const Image a = adapt_and_infer(x, base, small_adapt(2, 1e-3)).restored;
  const Image b = adapt_and_infer(x, base, narrow).restored;
  EXPECT_NE(a, b);
  EXPECT_EQ(parse_adapt_scope("shared_and_heads"), AdaptScope::shared_and_heads);
  EXPECT_THROW(parse_adapt_scope("heads"), Error);
}

TEST(Adapt, RejectsBadConfigAndDims) {
  const ParamSet base = init_params(small_config(), 1);
  EXPECT_THROW(adapt_and_infer(model_image(1), base, small_adapt(-1)), Error);
  EXPECT_THROW(adapt_and_infer(Image(3, 10, 16), base, small_adapt(1)), Error);
}

TEST(Sweep, ZeroEqualsPlainEvaluation) {
  const ParamSet base = init_params(small_config(), 20);
  std::vector<PairedSample> samples;
  for (uint64_t s = 0; s < 4; ++s) samples.push_back(sample(30 + s, kAllKinds[s]));
  const SweepResult sw = evaluate_with_adaptation(samples, base, small_adapt(4), {0});
  const EvalResult plain = evaluate(samples, model_pipeline(base), "base");
  ASSERT_EQ(sw.records.size(), plain.records.size());
  for (size_t i = 0; i < plain.records.size(); ++i) {
    EXPECT_EQ(sw.records[i].psnr_db, plain.records[i].psnr_db);
    EXPECT_EQ(sw.records[i].ssim, plain.records[i].ssim);
    EXPECT_EQ(sw.records[i].variant, "adapted-0");
  }
  ASSERT_EQ(sw.rows.size(), 1u);
  EXPECT_EQ(sw.rows[0].overall.psnr_db, plain.summary.back().psnr_db);
}

TEST(Sweep, PermutationInvariantPerImage) {
  const ParamSet base = init_params(small_config(), 21);
  std::vector<PairedSample> samples;
  for (uint64_t s = 0; s < 4; ++s) samples.push_back(sample(40 + s, kAllKinds[s]));
  const SweepResult fwd = evaluate_with_adaptation(samples, base, small_adapt(2, 1e-3), {0, 1, 2});
  std::vector<PairedSample> rev(samples.rbegin(), samples.rend());
  const SweepResult bwd = evaluate_with_adaptation(rev, base, small_adapt(2, 1e-3), {0, 1, 2});
  ASSERT_EQ(fwd.records.size(), bwd.records.size());
  for (const auto& r : fwd.records) {
    const auto it = std::find_if(bwd.records.begin(), bwd.records.end(), [&](const MetricRecord& o) {
      return o.sample_id == r.sample_id && o.variant == r.variant;
    });
    ASSERT_NE(it, bwd.records.end());
    EXPECT_EQ(it->psnr_db, r.psnr_db);
    EXPECT_EQ(it->ssim, r.ssim);
  }
  EXPECT_EQ(fwd.rows.size(), 3u);
  EXPECT_EQ(fwd.traces.size(), 4u);
}

TEST(Sweep, MatchesIndependentAdaptation) {
  const ParamSet base = init_params(small_config(), 22);
  const PairedSample s = sample(50, OccluderKind::raindrop);
  const SweepResult sw = evaluate_with_adaptation({s}, base, small_adapt(3, 1e-3), {1, 3});
  const Image x = to_model_range(s.degraded);
  for (int n : {1, 3}) {
    const Image out = from_model_range(adapt_and_infer(x, base, small_adapt(n, 1e-3)).restored);
    const MetricRecord m = measure(s, out, adapted_variant(n));
    const auto it = std::find_if(sw.records.begin(), sw.records.end(),
                                 [&](const MetricRecord& r) { return r.variant == adapted_variant(n); });
    ASSERT_NE(it, sw.records.end());
    EXPECT_EQ(it->psnr_db, m.psnr_db);
  }
}

TEST(Sweep, EmptySplitRejected) {
  const ParamSet base = init_params(small_config(), 1);
  EXPECT_THROW(evaluate_with_adaptation({}, base, small_adapt(1), {0}), Error);
}
