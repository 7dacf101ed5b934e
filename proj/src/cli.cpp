#include "occlusim/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "occlusim/adaptation.hpp"
#include "occlusim/checkpoint.hpp"
#include "occlusim/config.hpp"
#include "occlusim/data.hpp"
#include "occlusim/metrics.hpp"
#include "occlusim/report.hpp"
#include "occlusim/training.hpp"

namespace occlusim {

namespace fs = std::filesystem;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

std::vector<OccluderKind> parse_kind_list(const std::string& csv) {
  std::vector<OccluderKind> kinds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const OccluderKind k = parse_kind(item);
    if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
  }
  if (kinds.empty()) throw Error("empty kind list '" + csv + "'");
  return kinds;
}

std::string kind_names(const std::vector<OccluderKind>& kinds) {
  std::string s;
  for (OccluderKind k : kinds) s += (s.empty() ? "" : ",") + std::string(to_string(k));
  return s;
}

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  CLI::Option* seed_opt = nullptr;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Run configuration JSON (schema in configs/schema.json)");
    seed_opt = app->add_option("--seed", seed, "Global seed; falls back to the config file, then OCCLUSIM_SEED");
  }

  RunConfigFile load() const { return config.empty() ? default_run_config() : load_run_config(config); }
};

// ---- synth -----------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string base_images;
  std::string out;
  std::optional<int> count_per_kind;
  std::optional<int> height;
  std::optional<int> width;
  std::optional<double> train_fraction;
  std::string kinds;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  RunConfigFile cfg = a.common.load();
  const std::string base = !a.base_images.empty() ? a.base_images : cfg.paths.base_images;
  const std::string dest = !a.out.empty() ? a.out : cfg.paths.data;
  if (base.empty()) throw Error("no base image directory (use --base-images)");
  if (dest.empty()) throw Error("no output directory (use --out)");
  if (!fs::is_directory(base)) throw Error("base image directory not found: " + base);
  if (a.count_per_kind) cfg.dataset.count_per_kind = *a.count_per_kind;
  if (a.height) cfg.dataset.height = *a.height;
  if (a.width) cfg.dataset.width = *a.width;
  if (a.train_fraction) cfg.dataset.train_fraction = *a.train_fraction;
  std::vector<DegradationSpec> specs = cfg.degradations;
  if (!a.kinds.empty()) {
    const auto keep = parse_kind_list(a.kinds);
    std::erase_if(specs, [&](const DegradationSpec& s) {
      return std::find(keep.begin(), keep.end(), s.kind) == keep.end();
    });
  }
  GenerateOptions opt;
  opt.height = cfg.dataset.height;
  opt.width = cfg.dataset.width;
  opt.train_fraction = cfg.dataset.train_fraction;
  opt.seed = resolve_seed(a.common.seed, cfg);
  const DatasetManifest m = generate_dataset(base, specs, cfg.dataset.count_per_kind, dest, opt);
  out << "synth: wrote " << m.samples.size() << " pairs to " << dest << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string data;
  std::string out;
  bool primary_only = false;
  bool no_mask = false;
  bool no_recurrence = false;
  bool no_augment = false;
  std::optional<int> iterations;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<int> checkpoint_every;
  std::string train_kinds;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfigFile cfg = a.common.load();
  const std::string data = !a.data.empty() ? a.data : cfg.paths.data;
  const std::string dest = !a.out.empty() ? a.out : cfg.paths.out;
  if (data.empty()) throw Error("no dataset directory (use --data)");
  if (dest.empty()) throw Error("no output directory (use --out)");
  TrainConfig tc = cfg.train;
  tc.network = cfg.network;
  tc.loss = cfg.loss;
  if (a.no_mask) tc.network.mask_enabled = false;
  if (a.no_recurrence) tc.network.feature_recurrence_enabled = false;
  if (a.no_augment) tc.augment = false;
  if (a.iterations) tc.iterations = *a.iterations;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.learning_rate) tc.learning_rate = *a.learning_rate;
  if (a.checkpoint_every) tc.checkpoint_every = *a.checkpoint_every;
  tc.seed = resolve_seed(a.common.seed, cfg);
  tc.output_dir = dest;

  std::vector<OccluderKind> kinds;
  if (!a.train_kinds.empty()) kinds = parse_kind_list(a.train_kinds);
  const auto samples = load_pairs(data, Split::train, kinds);
  if (samples.empty()) throw Error("no training samples in " + data);

  ProgressFn progress;
  if (!a.quiet) {
    const int every = std::max(1, tc.iterations / 10);
    progress = [&err, every, total = tc.iterations](int it, double joint, double primary, double aux) {
      if ((it + 1) % every != 0 && it + 1 != total) return;
      err << "train: iteration " << it + 1 << "/" << total << " joint " << format_number(joint) << " primary "
          << format_number(primary) << " auxiliary " << format_number(aux) << "\n";
    };
  }
  auto [params, report] = a.primary_only ? train_primary_only(samples, tc, progress) : train(samples, tc, progress);
  out << "train: " << report.mode << " model written to " << report.final_checkpoint << " ("
      << format_number(report.wall_seconds) << " s)\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string split = "test";
  std::vector<int> adapt_n;
  std::optional<double> adapt_lr;
  std::string adapt_scope;
  bool no_mask = false;
  bool no_recurrence = false;
  bool ablation = false;
  std::string primary_checkpoint;
  std::string nomask_checkpoint;
  std::string train_kinds;
  std::string test_kind;
  int grid = 0;
  CLI::Option* split_opt = nullptr;
};

struct EvalOutputs {
  std::vector<MetricRecord> records;
  std::vector<SummaryRow> summary;
};

void append(EvalOutputs& o, const std::vector<MetricRecord>& records, const std::vector<SummaryRow>& rows) {
  o.records.insert(o.records.end(), records.begin(), records.end());
  o.summary.insert(o.summary.end(), rows.begin(), rows.end());
}

// Sweep row with the best overall PSNR among n > 0 (n = 0 only if nothing else).
const SweepRow& best_row(const SweepResult& s) {
  const SweepRow* best = nullptr;
  for (const auto& r : s.rows) {
    if (r.n == 0 && s.rows.size() > 1) continue;
    if (!best || r.overall.psnr_db > best->overall.psnr_db) best = &r;
  }
  return *best;
}

std::vector<MetricRecord> relabel(const SweepResult& s, int n, const std::string& variant) {
  std::vector<MetricRecord> out;
  for (const auto& r : s.records) {
    if (r.variant != adapted_variant(n)) continue;
    out.push_back(r);
    out.back().variant = variant;
  }
  return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  RunConfigFile cfg = a.common.load();
  const std::string data = !a.data.empty() ? a.data : cfg.paths.data;
  const std::string dest = !a.out.empty() ? a.out : cfg.paths.out;
  if (a.checkpoint.empty()) throw Error("--checkpoint is required");
  if (data.empty()) throw Error("no dataset directory (use --data)");
  if (dest.empty()) throw Error("no output directory (use --out)");

  AdaptConfig ac = cfg.adapt;
  ac.loss = cfg.loss;
  if (a.adapt_lr) ac.learning_rate = *a.adapt_lr;
  if (!a.adapt_scope.empty()) ac.scope = parse_adapt_scope(a.adapt_scope);
  std::vector<int> sweep = a.adapt_n;
  if (sweep.empty()) sweep = {0, ac.n_updates};
  std::sort(sweep.begin(), sweep.end());
  sweep.erase(std::unique(sweep.begin(), sweep.end()), sweep.end());

  std::vector<OccluderKind> test_kinds;
  Split split = parse_split(a.split);
  std::vector<OccluderKind> train_kinds;
  if (!a.train_kinds.empty()) train_kinds = parse_kind_list(a.train_kinds);
  if (!a.test_kind.empty()) {
    test_kinds = parse_kind_list(a.test_kind);
    for (OccluderKind k : test_kinds) {
      if (std::find(train_kinds.begin(), train_kinds.end(), k) != train_kinds.end()) {
        throw Error("test kind " + std::string(to_string(k)) + " is also a training kind");
      }
    }
    // A held-out kind was never trained on, so every pair of it is usable.
    if (!a.split_opt->count()) split = Split::all;
  }
  const auto samples = load_pairs(data, split, test_kinds);
  if (samples.empty()) throw Error("no evaluation samples in " + data);

  auto load_model = [&](const std::string& path) {
    ParamSet p = load_checkpoint(path);
    if (a.no_mask) p.config.mask_enabled = false;
    if (a.no_recurrence) p.config.feature_recurrence_enabled = false;
    return p;
  };

  EvalOutputs o;
  const EvalResult degraded = evaluate(samples, identity_pipeline(), "degraded");
  append(o, degraded.records, degraded.summary);

  std::string title = "Evaluation (" + std::to_string(samples.size()) + " images, split " +
                      std::string(to_string(split)) + ")";
  if (!test_kinds.empty()) {
    title = "Unseen kind " + kind_names(test_kinds) +
            (train_kinds.empty() ? std::string() : " (trained on " + kind_names(train_kinds) + ")");
  }

  std::string markdown;
  SweepResult main_sweep;
  const ParamSet full = load_model(a.checkpoint);
  if (a.ablation) {
    if (a.primary_checkpoint.empty() || a.nomask_checkpoint.empty()) {
      throw Error("--ablation needs --primary-checkpoint and --nomask-checkpoint");
    }
    const ParamSet primary = load_model(a.primary_checkpoint);
    const ParamSet nomask = load_model(a.nomask_checkpoint);
    const EvalResult p = evaluate(samples, model_pipeline(primary), "Primary");
    append(o, p.records, p.summary);
    const SweepResult s_nomask = evaluate_with_adaptation(samples, nomask, ac, sweep);
    main_sweep = evaluate_with_adaptation(samples, full, ac, sweep);
    const int n_nomask = best_row(s_nomask).n;
    const int n_full = best_row(main_sweep).n;
    const std::pair<std::string, std::pair<const SweepResult*, int>> rows[] = {
        {"Primary+Auxiliary", {&s_nomask, 0}},
        {"Primary+Auxiliary+Update", {&s_nomask, n_nomask}},
        {"Primary+Auxiliary+Mask", {&main_sweep, 0}},
        {"Primary+Auxiliary+Update+Mask", {&main_sweep, n_full}},
    };
    for (const auto& [name, src] : rows) {
      const auto recs = relabel(*src.first, src.second, name);
      append(o, recs, summarize(recs, name));
    }
    markdown = summary_markdown(o.summary, "Ablation: " + title) + "\nBest n: " + std::to_string(n_nomask) +
               " without mask, " + std::to_string(n_full) + " with mask.\n";
  } else {
    const EvalResult base = evaluate(samples, model_pipeline(full), "base");
    append(o, base.records, base.summary);
    main_sweep = evaluate_with_adaptation(samples, full, ac, sweep);
    for (const auto& row : main_sweep.rows) {
      const auto recs = relabel(main_sweep, row.n, adapted_variant(row.n));
      std::vector<SummaryRow> rows = row.per_kind;
      rows.push_back(row.overall);
      append(o, recs, rows);
    }
    markdown = summary_markdown(o.summary, title);
  }
  markdown += "\n" + sweep_markdown(main_sweep, "Adaptation sweep");

  const fs::path d(dest);
  fs::create_directories(d);
  write_text(d / "records.csv", records_csv(o.records));
  write_text(d / "records.json", records_json(o.records));
  write_text(d / "summary.csv", summary_csv(o.summary));
  write_text(d / "summary.md", markdown);
  write_text(d / "sweep.csv", sweep_csv(main_sweep));
  write_text(d / "traces.json", traces_json(main_sweep.traces));

  if (a.grid > 0) {
    const size_t rows = std::min<size_t>(static_cast<size_t>(a.grid), samples.size());
    std::vector<PairedSample> picked(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(rows));
    AdaptConfig gc = ac;
    gc.n_updates = best_row(main_sweep).n;
    std::vector<Image> outputs;
    for (const auto& s : picked) {
      outputs.push_back(from_model_range(adapt_and_infer(to_model_range(s.degraded), full, gc).restored));
    }
    emit_grid(picked, outputs, d / "grid.png");
  }
  out << markdown;
  return 0;
}

// ---- demo ------------------------------------------------------------------

struct DemoArgs {
  Common common;
  std::string base_images;
  std::string out;
  int count_per_kind = 8;
  int iterations = 100;
};

int cmd_demo(const DemoArgs& a, std::ostream& out, std::ostream& err) {
  const fs::path root(a.out);
  if (a.out.empty()) throw Error("--out is required");
  SynthArgs s;
  s.common = a.common;
  s.base_images = a.base_images.empty() ? std::string(OCCLUSIM_DEFAULT_BASE_IMAGES) : a.base_images;
  s.out = (root / "data").string();
  s.count_per_kind = a.count_per_kind;
  s.train_fraction = 0.75;
  cmd_synth(s, out);

  TrainArgs t;
  t.common = a.common;
  t.data = s.out;
  t.out = (root / "model").string();
  t.iterations = a.iterations;
  t.batch_size = std::min(4, a.count_per_kind * 3);
  cmd_train(t, out, err);

  EvalArgs e;
  e.common = a.common;
  e.checkpoint = (root / "model" / "model.ckpt").string();
  e.data = s.out;
  e.out = (root / "eval").string();
  e.adapt_n = {0, 1, 2, 4};
  e.grid = 4;
  CLI::App dummy;
  e.split_opt = dummy.add_option("--split", e.split);
  return cmd_eval(e, out);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Occlusion synthesis, two-branch restoration training and test-time adaptation"};
  app.name("occlusim");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a paired degraded/clean dataset");
  synth.common.add(c_synth);
  c_synth->add_option("--base-images", synth.base_images, "Directory of clean base images (PNG)");
  c_synth->add_option("--out", synth.out, "Dataset output directory (replaced)");
  c_synth->add_option("--count-per-kind", synth.count_per_kind, "Pairs per occluder kind");
  c_synth->add_option("--height", synth.height, "Output height in pixels");
  c_synth->add_option("--width", synth.width, "Output width in pixels");
  c_synth->add_option("--train-fraction", synth.train_fraction, "Fraction of pairs in the train split");
  c_synth->add_option("--kinds", synth.kinds, "Comma-separated subset of kinds to generate");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the two-branch network");
  tr.common.add(c_train);
  c_train->add_option("--data", tr.data, "Dataset root (train split is used)");
  c_train->add_option("--out", tr.out, "Output directory for model.ckpt and train_report.json");
  c_train->add_flag("--primary-only", tr.primary_only, "Train the primary branch alone; auxiliary stays at init");
  c_train->add_flag("--no-mask", tr.no_mask, "Disable the occlusion attention mask");
  c_train->add_flag("--no-recurrence", tr.no_recurrence, "Disable cross-scale feature recurrence");
  c_train->add_flag("--no-augment", tr.no_augment, "Train on the pairs as stored (no random flips/transposes)");
  c_train->add_option("--iterations", tr.iterations, "Optimizer steps");
  c_train->add_option("--batch-size", tr.batch_size, "Images per step");
  c_train->add_option("--learning-rate", tr.learning_rate, "Adam step size");
  c_train->add_option("--checkpoint-every", tr.checkpoint_every, "Intermediate checkpoint period (0 = off)");
  c_train->add_option("--train-kinds", tr.train_kinds, "Comma-separated kinds to train on (default all)");
  c_train->add_flag("--quiet", tr.quiet, "Suppress progress lines");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint with optional test-time adaptation");
  ev.common.add(c_eval);
  c_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint (the full model in ablation mode)");
  c_eval->add_option("--data", ev.data, "Dataset root");
  c_eval->add_option("--out", ev.out, "Report directory");
  ev.split_opt = c_eval->add_option("--split", ev.split, "train, test or all (default test; all with --test-kind)");
  c_eval->add_option("--adapt-n", ev.adapt_n, "Adaptation update counts to sweep, e.g. 0,1,2,4")->delimiter(',');
  c_eval->add_option("--adapt-lr", ev.adapt_lr, "Adaptation step size");
  c_eval->add_option("--adapt-scope", ev.adapt_scope, "all_params or shared_and_heads");
  c_eval->add_flag("--no-mask", ev.no_mask, "Evaluate with the attention mask switched off");
  c_eval->add_flag("--no-recurrence", ev.no_recurrence, "Evaluate with feature recurrence switched off");
  c_eval->add_flag("--ablation", ev.ablation, "Emit the five ablation rows");
  c_eval->add_option("--primary-checkpoint", ev.primary_checkpoint, "Primary-only model for the ablation");
  c_eval->add_option("--nomask-checkpoint", ev.nomask_checkpoint, "Joint model trained without the mask");
  c_eval->add_option("--train-kinds", ev.train_kinds, "Kinds the model was trained on (report label, checked)");
  c_eval->add_option("--test-kind", ev.test_kind, "Held-out kind(s) to evaluate on");
  c_eval->add_option("--grid", ev.grid, "Write grid.png with this many rows (0 = off)");

  DemoArgs demo;
  auto* c_demo = app.add_subcommand("demo", "Small end-to-end run: synth, train, eval, grid");
  demo.common.add(c_demo);
  c_demo->add_option("--base-images", demo.base_images, "Directory of clean base images");
  c_demo->add_option("--out", demo.out, "Run directory")->required();
  c_demo->add_option("--count-per-kind", demo.count_per_kind, "Pairs per kind");
  c_demo->add_option("--iterations", demo.iterations, "Training steps");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "occlusim: error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "synth") return cmd_synth(synth, out);
    if (name == "train") return cmd_train(tr, out, err);
    if (name == "eval") return cmd_eval(ev, out);
    return cmd_demo(demo, out, err);
  } catch (const std::exception& e) {
    err << "occlusim: error: " << name << ": " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace occlusim
