#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "occlusim/metrics.hpp"
#include "occlusim/png_io.hpp"
#include "occlusim/report.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace occlusim;

namespace {

PairedSample sample(uint64_t seed, OccluderKind kind, int h = 16, int w = 16) {
  PairedSample s;
  s.sample_id = std::string(to_string(kind)) + "_" + std::to_string(seed);
  s.kind = kind;
  Rng rng(seed);
  s.clean = oracle::random_image(rng, 3, h, w);
  s.degraded = oracle::random_image(rng, 3, h, w);
  return s;
}

}  // namespace

TEST(Psnr, IdenticalIsCapped) {
  Rng rng(1);
  const Image x = oracle::random_image(rng, 3, 8, 8);
  const PsnrResult r = psnr(x, x);
  EXPECT_EQ(r.db, 100.0);
  EXPECT_TRUE(r.capped);
}

TEST(Psnr, TwentyDecibels) {
  const PsnrResult r = psnr(Image(3, 4, 4, 0.0f), Image(3, 4, 4, 0.1f));
  EXPECT_NEAR(r.db, 10.0 * std::log10(1.0 / 0.01), 1e-5);
  EXPECT_NEAR(r.db, 20.0, 1e-5);
  EXPECT_FALSE(r.capped);
}

TEST(Psnr, DoublingErrorCostsSixDecibels) {
  Rng rng(2);
  const Image y = oracle::random_image(rng, 3, 16, 16, 0.3, 0.7);
  Image e1 = y, e2 = y;
  Rng noise(3);
  for (size_t i = 0; i < y.size(); ++i) {
    const float d = static_cast<float>(noise.uniform(-0.05, 0.05));
    e1.pixels[i] += d;
    e2.pixels[i] += 2 * d;
  }
  EXPECT_NEAR(psnr(e1, y).db - psnr(e2, y).db, 20.0 * std::log10(2.0), 1e-3);
}

TEST(Psnr, ShapeMismatchRejected) {
  EXPECT_THROW(psnr(Image(3, 4, 4), Image(3, 4, 5)), Error);
  EXPECT_THROW(psnr(Image(3, 4, 4), Image(3, 4, 4), 0.0), Error);
}

TEST(Ssim, SelfAndSymmetry) {
  Rng rng(4);
  const Image x = oracle::random_image(rng, 3, 24, 24), y = oracle::random_image(rng, 3, 24, 24);
  EXPECT_NEAR(ssim(x, x), 1.0, 1e-6);
  EXPECT_NEAR(ssim(x, y), ssim(y, x), 1e-6);
}

TEST(Ssim, ConstantImagesClosedForm) {
  const double a = 0.2, b = 0.6, c1 = 1e-4, c2 = 9e-4;
  const double expect = (2 * a * b + c1) * (2 * 0 + c2) / ((a * a + b * b + c1) * (0 + 0 + c2));
  EXPECT_NEAR(ssim(Image(3, 16, 16, static_cast<float>(a)), Image(3, 16, 16, static_cast<float>(b))), expect, 1e-6);
}

TEST(Ssim, SmallImageRejected) { EXPECT_THROW(ssim(Image(3, 10, 16), Image(3, 10, 16)), Error); }

TEST(MetricOracle, RandomSixteenBySixteen) {
  Rng rng(5);
  for (int k = 0; k < 10; ++k) {
    const Image x = oracle::random_image(rng, 3, 16, 16), y = oracle::random_image(rng, 3, 16, 16);
    EXPECT_NEAR(psnr(x, y).db, oracle::psnr(x, y), 1e-6);
    EXPECT_NEAR(ssim(x, y), oracle::ssim(x, y), 1e-6);
  }
}

TEST(Evaluate, IdentityPipelineIsDegradedBaseline) {
  const PairedSample s = sample(1, OccluderKind::dirt);
  const EvalResult r = evaluate({s}, identity_pipeline(), "degraded");
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_NEAR(r.records[0].psnr_db, oracle::psnr(s.degraded, s.clean), 1e-9);
  EXPECT_EQ(r.records[0].variant, "degraded");
}

TEST(Evaluate, BookkeepingFourKindsByFive) {
  std::vector<PairedSample> samples;
  for (OccluderKind k : kAllKinds) {
    for (uint64_t i = 0; i < 5; ++i) samples.push_back(sample(100 * (static_cast<int>(k) + 1) + i, k));
  }
  const EvalResult r = evaluate(samples, identity_pipeline(), "degraded");
  EXPECT_EQ(r.records.size(), 20u);
  ASSERT_EQ(r.summary.size(), 5u);
  EXPECT_EQ(r.summary.back().group, "overall");
  for (size_t g = 0; g < 4; ++g) {
    EXPECT_EQ(r.summary[g].group, to_string(kAllKinds[g]));
    double sum = 0.0;
    for (size_t i = 0; i < 5; ++i) sum += r.records[g * 5 + i].psnr_db;
    EXPECT_NEAR(r.summary[g].psnr_db, sum / 5.0, 1e-9);
    EXPECT_EQ(r.summary[g].count, 5);
  }
  double all = 0.0, all_ssim = 0.0;
  for (const auto& rec : r.records) {
    all += rec.psnr_db;
    all_ssim += rec.ssim;
  }
  EXPECT_NEAR(r.summary.back().psnr_db, all / 20.0, 1e-9);
  EXPECT_NEAR(r.summary.back().ssim, all_ssim / 20.0, 1e-9);
}

TEST(Evaluate, FailuresRecordedNotFatal) {
  std::vector<PairedSample> samples = {sample(1, OccluderKind::dirt), sample(2, OccluderKind::dirt)};
  int calls = 0;
  const Pipeline flaky = [&](const PairedSample& s) {
    if (calls++ == 0) throw Error("boom");
    return s.degraded;
  };
  const EvalResult r = evaluate(samples, flaky, "x");
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_TRUE(r.records[0].failed);
  EXPECT_TRUE(std::isnan(r.records[0].psnr_db));
  EXPECT_EQ(r.records[0].error, "boom");
  EXPECT_EQ(r.summary.back().count, 1);
  EXPECT_EQ(r.summary.back().failures, 1);
  EXPECT_NEAR(r.summary.back().psnr_db, r.records[1].psnr_db, 1e-12);
}

TEST(Evaluate, PermutedSplitPermutesRecords) {
  std::vector<PairedSample> samples;
  for (uint64_t i = 0; i < 4; ++i) samples.push_back(sample(i, kAllKinds[i]));
  const EvalResult a = evaluate(samples, identity_pipeline(), "v");
  std::vector<PairedSample> rev(samples.rbegin(), samples.rend());
  const EvalResult b = evaluate(rev, identity_pipeline(), "v");
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.records[i].sample_id, b.records[3 - i].sample_id);
    EXPECT_EQ(a.records[i].psnr_db, b.records[3 - i].psnr_db);
  }
  EXPECT_THROW(evaluate({}, identity_pipeline(), "v"), Error);
}

TEST(Grid, SingleSampleDims) {
  testutil::TempDir tmp("grid");
  const PairedSample s = sample(1, OccluderKind::raindrop, 16, 20);
  emit_grid({s}, {s.clean}, tmp / "g.png");
  const Image g = read_png_rgb(tmp / "g.png");
  EXPECT_EQ(g.height, 12 + 4 + 1 * (16 + 4));
  EXPECT_EQ(g.width, 4 + 3 * (20 + 4));
  // GT tile lands at the documented offset.
  EXPECT_NEAR(g.at(0, 16, 4), s.clean.at(0, 0, 0), 0.5 / 255 + 1e-6);
  EXPECT_NEAR(g.at(1, 16, 4 + 24), s.degraded.at(1, 0, 0), 0.5 / 255 + 1e-6);
}

TEST(Grid, LayoutArithmetic) {
  for (int rows : {1, 2, 7}) {
    const GridSize s = grid_size(rows, 64, 64);
    EXPECT_EQ(s.height, rows * 64 + kGridHeader + kGridPad * (rows + 1));
    EXPECT_EQ(s.width, 3 * 64 + 4 * kGridPad);
  }
  const PairedSample a = sample(1, OccluderKind::dirt), b = sample(2, OccluderKind::dirt);
  const Image g = build_grid({a, b}, {a.clean, b.clean});
  EXPECT_EQ(g.height, grid_size(2, 16, 16).height);
}

TEST(Grid, ZeroSamplesAndBadPathRejected) {
  testutil::TempDir tmp("grid0");
  EXPECT_THROW(emit_grid({}, {}, tmp / "g.png"), Error);
  EXPECT_FALSE(std::filesystem::exists(tmp / "g.png"));
  const PairedSample s = sample(1, OccluderKind::dirt);
  EXPECT_THROW(emit_grid({s}, {}, tmp / "g.png"), Error);
  EXPECT_THROW(emit_grid({s}, {s.clean}, tmp / "missing_dir" / "g.png"), Error);
}

TEST(Report, CsvAndJsonShapes) {
  std::vector<MetricRecord> recs(2);
  recs[0] = {"a", OccluderKind::dirt, "base", 21.5, false, 0.75, false, ""};
  recs[1] = {"b", OccluderKind::particle, "base", std::nan(""), false, std::nan(""), true, "bad, \"x\""};
  const std::string csv = records_csv(recs);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "sample_id,kind,variant,psnr_db,psnr_capped,ssim,failed,error");
  EXPECT_NE(csv.find("a,dirt,base,21.500000,0,0.750000,0,"), std::string::npos) << csv;
  EXPECT_NE(csv.find("nan"), std::string::npos);
  const auto j = nlohmann::json::parse(records_json(recs));
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0].at("sample_id"), "a");

  const auto rows = summarize(recs, "base");
  const std::string md = summary_markdown(rows, "T");
  EXPECT_NE(md.find("| base |"), std::string::npos);
  EXPECT_NE(md.find("overall PSNR"), std::string::npos);
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333");
}
