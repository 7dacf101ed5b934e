#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "occlusim/checkpoint.hpp"
#include "occlusim/cli.hpp"
#include "occlusim/config.hpp"
#include "test_util.hpp"

using namespace occlusim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json tiny_config_json() {
  json specs = json::array();
  for (const char* k : {"dirt", "raindrop", "muddy_water", "particle"}) {
    specs.push_back({{"kind", k}, {"blob_radius", {2.0, 4.0}}, {"psf_radius", {0.5, 1.0}}});
  }
  return {{"schema_version", 1},
          {"seed", 5},
          {"dataset", {{"height", 16}, {"width", 16}, {"count_per_kind", 4}, {"train_fraction", 0.75}}},
          {"degradations", specs},
          {"network", {{"scales", 2}, {"base_channels", 4}}},
          {"loss", {{"msssim_window", 5}, {"msssim_levels", 2}}},
          {"train", {{"iterations", 3}, {"batch_size", 4}}},
          {"adapt", {{"n_updates", 2}, {"learning_rate", 1e-3}}}};
}

// Shared tiny dataset and models for the end-to-end checks.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new testutil::TempDir("cli");
    std::ofstream(*tmp_ / "tiny.json") << tiny_config_json().dump(2);
    const CliRun s = cli({"synth", "--config", cfg(), "--base-images", testutil::base_images().string(), "--out", data()});
    ASSERT_EQ(s.code, 0) << s.err;
    const CliRun t = cli({"train", "--config", cfg(), "--data", data(), "--out", dir("joint"), "--quiet"});
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static void TearDownTestSuite() { delete tmp_; }

  static std::string cfg() { return (*tmp_ / "tiny.json").string(); }
  static std::string data() { return (*tmp_ / "data").string(); }
  static std::string dir(const std::string& name) { return (*tmp_ / name).string(); }

  static testutil::TempDir* tmp_;
};

testutil::TempDir* CliTest::tmp_ = nullptr;

std::vector<std::string> csv_column(const std::string& csv, size_t col) {
  std::vector<std::string> values;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    for (size_t i = 0; i <= col; ++i) std::getline(cells, cell, ',');
    values.push_back(cell);
  }
  return values;
}

}  // namespace

TEST(Config, DefaultsAndRoundTrip) {
  const RunConfigFile d = default_run_config();
  EXPECT_EQ(d.degradations.size(), 4u);
  EXPECT_EQ(d.adapt.n_updates, 4);
  EXPECT_DOUBLE_EQ(d.adapt.learning_rate, 6e-6);
  EXPECT_EQ(d.train.iterations, 1000);
  const RunConfigFile r = run_config_from_json(tiny_config_json());
  EXPECT_EQ(r.network.scales, 2);
  EXPECT_EQ(r.train.loss.msssim_window, 5);
  EXPECT_EQ(r.adapt.loss.msssim_levels, 2);
  EXPECT_EQ(*r.seed, 5u);
  EXPECT_EQ(r.degradations[1].blob_radius.hi, 4.0);
  EXPECT_FLOAT_EQ(r.degradations[1].alpha_floor, default_spec(OccluderKind::raindrop).alpha_floor);
  const RunConfigFile back = run_config_from_json(run_config_to_json(r));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(r));
}

TEST(Config, UnknownKeysRejected) {
  json j = tiny_config_json();
  j["train"]["iteratons"] = 5;
  try {
    run_config_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("iteratons"), std::string::npos) << e.what();
  }
  j = tiny_config_json();
  j["extra"] = 1;
  EXPECT_THROW(run_config_from_json(j), Error);
  j = tiny_config_json();
  j["degradations"][0]["colour"] = 1;
  EXPECT_THROW(run_config_from_json(j), Error);
}

TEST(Config, SchemaVersionChecked) {
  json j = tiny_config_json();
  j.erase("schema_version");
  EXPECT_THROW(run_config_from_json(j), Error);
  j["schema_version"] = 2;
  EXPECT_THROW(run_config_from_json(j), Error);
}

TEST(Config, OrderingAndRangesValidated) {
  json j = tiny_config_json();
  j["degradations"][3]["alpha_floor"] = 0.9;
  EXPECT_THROW(run_config_from_json(j), Error);
  j = tiny_config_json();
  j["loss"]["alpha_joint"] = 2.0;
  EXPECT_THROW(run_config_from_json(j), Error);
}

TEST(Config, SeedPrecedence) {
  RunConfigFile c = default_run_config();
  ::unsetenv("OCCLUSIM_SEED");
  EXPECT_EQ(resolve_seed(std::nullopt, c), 0u);
  ::setenv("OCCLUSIM_SEED", "77", 1);
  EXPECT_EQ(resolve_seed(std::nullopt, c), 77u);
  c.seed = 9;
  EXPECT_EQ(resolve_seed(std::nullopt, c), 9u);
  EXPECT_EQ(resolve_seed(3, c), 3u);
  ::setenv("OCCLUSIM_SEED", "x1", 1);
  c.seed.reset();
  EXPECT_THROW(resolve_seed(std::nullopt, c), Error);
  ::unsetenv("OCCLUSIM_SEED");
}

TEST(Config, ShippedConfigsLoad) {
  const fs::path dir = fs::path(OCCLUSIM_SOURCE_DIR) / "configs";
  EXPECT_NO_THROW(load_run_config(dir / "desk.json"));
  std::ifstream in(dir / "schema.json");
  ASSERT_TRUE(in);
  const json schema = json::parse(in);
  // Every key the loader emits is documented in the schema.
  const json full = run_config_to_json(load_run_config(dir / "desk.json"));
  for (const auto& [section, value] : full.items()) {
    ASSERT_TRUE(schema.at("properties").contains(section)) << section;
    if (!value.is_object()) continue;
    for (const auto& [key, v] : value.items()) {
      EXPECT_TRUE(schema["properties"][section]["properties"].contains(key)) << section << "." << key;
    }
  }
}

TEST(Cli, UsageAndErrors) {
  CliRun r = cli({});
  EXPECT_EQ(r.code, 2);
  r = cli({"bogus"});
  EXPECT_EQ(r.code, 2);
  r = cli({"train", "--iterations", "abc"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("occlusim: error: "), std::string::npos);
  r = cli({"synth", "--base-images", "/nonexistent/bases", "--out", "/tmp/occlusim_never"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(std::regex_match(r.err, std::regex("occlusim: error: synth: .*/nonexistent/bases.*\n"))) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, HelpDocumentsEveryFlag) {
  const std::map<std::string, std::vector<std::string>> flags = {
      {"synth", {"--config", "--seed", "--base-images", "--out", "--count-per-kind", "--height", "--width",
                 "--train-fraction", "--kinds"}},
      {"train", {"--config", "--seed", "--data", "--out", "--primary-only", "--no-mask", "--no-recurrence",
                 "--no-augment", "--iterations", "--batch-size", "--learning-rate", "--checkpoint-every", "--train-kinds", "--quiet"}},
      {"eval", {"--config", "--seed", "--checkpoint", "--data", "--out", "--split", "--adapt-n", "--adapt-lr",
                "--adapt-scope", "--no-mask", "--no-recurrence", "--ablation", "--primary-checkpoint",
                "--nomask-checkpoint", "--train-kinds", "--test-kind", "--grid"}},
      {"demo", {"--out", "--base-images", "--count-per-kind", "--iterations"}},
  };
  for (const auto& [sub, list] : flags) {
    const CliRun r = cli({sub, "--help"});
    EXPECT_EQ(r.code, 0);
    for (const auto& f : list) EXPECT_NE(r.out.find(f), std::string::npos) << sub << " " << f;
  }
}

TEST(Cli, UnknownConfigKeyFailsFast) {
  testutil::TempDir tmp("cli_badcfg");
  json j = tiny_config_json();
  j["network"]["layers"] = 3;
  std::ofstream(tmp / "bad.json") << j.dump();
  const CliRun r = cli({"synth", "--config", (tmp / "bad.json").string(), "--base-images",
                     testutil::base_images().string(), "--out", (tmp / "d").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown key"), std::string::npos) << r.err;
}

TEST_F(CliTest, SynthDeterministic) {
  const std::string again = dir("data2");
  ASSERT_EQ(cli({"synth", "--config", cfg(), "--base-images", testutil::base_images().string(), "--out", again}).code,
            0);
  EXPECT_EQ(slurp(fs::path(data()) / "manifest.json"), slurp(fs::path(again) / "manifest.json"));
  for (const auto& e : fs::recursive_directory_iterator(data())) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(fs::path(again) / fs::relative(e.path(), data())));
  }
  const auto m = json::parse(slurp(fs::path(data()) / "manifest.json"));
  EXPECT_EQ(m.at("samples").size(), 16u);
  EXPECT_EQ(m.at("seed").get<uint64_t>(), 5u);
}

TEST_F(CliTest, TrainWritesLoadableCheckpointAndReport) {
  const ParamSet p = load_checkpoint(fs::path(dir("joint")) / "model.ckpt");
  EXPECT_EQ(p.config.scales, 2);
  const auto report = json::parse(slurp(fs::path(dir("joint")) / "train_report.json"));
  EXPECT_EQ(report.at("joint_loss").size(), 3u);
  EXPECT_EQ(report.at("mode"), "joint");
}

TEST_F(CliTest, PrimaryOnlyLeavesAuxiliaryAtInit) {
  ASSERT_EQ(cli({"train", "--config", cfg(), "--data", data(), "--out", dir("prim"), "--primary-only", "--quiet"}).code,
            0);
  const ParamSet p = load_checkpoint(fs::path(dir("prim")) / "model.ckpt");
  const ParamSet init = init_params(p.config, 5);
  for (const auto& [name, t] : p.auxiliary_head) EXPECT_EQ(t.data, init.at(name).data) << name;
}

TEST_F(CliTest, AdaptZeroEqualsPlainEvaluation) {
  const std::string out = dir("eval0");
  const CliRun r = cli({"eval", "--config", cfg(), "--checkpoint", dir("joint") + "/model.ckpt", "--data", data(), "--out",
                     out, "--adapt-n", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(fs::path(out) / "records.csv");
  const auto variants = csv_column(csv, 2);
  const auto psnrs = csv_column(csv, 3);
  std::vector<std::string> base, adapted;
  for (size_t i = 0; i < variants.size(); ++i) {
    if (variants[i] == "base") base.push_back(psnrs[i]);
    if (variants[i] == "adapted-0") adapted.push_back(psnrs[i]);
  }
  ASSERT_FALSE(base.empty());
  EXPECT_EQ(base, adapted);
  for (const char* f : {"records.json", "summary.csv", "summary.md", "sweep.csv", "traces.json"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }
}

TEST_F(CliTest, AblationEmitsFiveRows) {
  ASSERT_EQ(cli({"train", "--config", cfg(), "--data", data(), "--out", dir("prim_a"), "--primary-only", "--quiet"}).code,
            0);
  ASSERT_EQ(cli({"train", "--config", cfg(), "--data", data(), "--out", dir("nomask"), "--no-mask", "--quiet"}).code, 0);
  const std::string out = dir("ablation");
  const CliRun r = cli({"eval", "--config", cfg(), "--checkpoint", dir("joint") + "/model.ckpt", "--primary-checkpoint",
                     dir("prim_a") + "/model.ckpt", "--nomask-checkpoint", dir("nomask") + "/model.ckpt", "--data",
                     data(), "--out", out, "--ablation", "--adapt-n", "0,1,2", "--grid", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto variants = csv_column(slurp(fs::path(out) / "summary.csv"), 0);
  for (const char* v : {"Primary", "Primary+Auxiliary", "Primary+Auxiliary+Update", "Primary+Auxiliary+Mask",
                        "Primary+Auxiliary+Update+Mask"}) {
    EXPECT_NE(std::find(variants.begin(), variants.end(), v), variants.end()) << v;
    EXPECT_NE(r.out.find(std::string("| ") + v + " |"), std::string::npos) << v;
  }
  EXPECT_TRUE(fs::exists(fs::path(out) / "grid.png"));
}

TEST_F(CliTest, UnseenKindReport) {
  ASSERT_EQ(cli({"train", "--config", cfg(), "--data", data(), "--out", dir("three"), "--train-kinds",
                 "raindrop,muddy,particle", "--quiet"})
                .code,
            0);
  const std::string out = dir("unseen");
  const CliRun r = cli({"eval", "--config", cfg(), "--checkpoint", dir("three") + "/model.ckpt", "--data", data(), "--out",
                     out, "--train-kinds", "raindrop,muddy,particle", "--test-kind", "dirt", "--adapt-n", "0,1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("Unseen kind dirt (trained on raindrop,muddy_water,particle)"), std::string::npos) << r.out;
  const auto kinds = csv_column(slurp(fs::path(out) / "records.csv"), 1);
  for (const auto& k : kinds) EXPECT_EQ(k, "dirt");
  // Held-out kind: every dirt pair is evaluated, not only its test split.
  const auto variants = csv_column(slurp(fs::path(out) / "records.csv"), 2);
  EXPECT_EQ(std::count(variants.begin(), variants.end(), "degraded"), 4);
  const CliRun clash = cli({"eval", "--config", cfg(), "--checkpoint", dir("three") + "/model.ckpt", "--data", data(),
                         "--out", out, "--train-kinds", "dirt", "--test-kind", "dirt"});
  EXPECT_EQ(clash.code, 1);
}

TEST_F(CliTest, EvalIsIdempotent) {
  const std::vector<std::string> args = {"eval", "--config", cfg(), "--checkpoint", dir("joint") + "/model.ckpt",
                                         "--data", data(), "--adapt-n", "0,2", "--out"};
  auto a = args, b = args;
  a.push_back(dir("idem_a"));
  b.push_back(dir("idem_b"));
  ASSERT_EQ(cli(a).code, 0);
  ASSERT_EQ(cli(b).code, 0);
  EXPECT_EQ(slurp(fs::path(dir("idem_a")) / "records.csv"), slurp(fs::path(dir("idem_b")) / "records.csv"));
  EXPECT_EQ(slurp(fs::path(dir("idem_a")) / "sweep.csv"), slurp(fs::path(dir("idem_b")) / "sweep.csv"));
}
