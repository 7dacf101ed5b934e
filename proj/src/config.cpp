#include "occlusim/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "occlusim/checkpoint.hpp"

namespace occlusim {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects any it was not asked about.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config: '" + path_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw Error("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  void get_interval(const char* key, Interval& out) {
    std::array<double, 2> v{out.lo, out.hi};
    get(key, v);
    out = {v[0], v[1]};
  }

  void get_range(const char* key, IntRange& out) {
    std::array<int, 2> v{out.lo, out.hi};
    get(key, v);
    out = {v[0], v[1]};
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw Error("config: unknown key '" + path_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

DegradationSpec read_spec(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) throw Error("config: '" + path + "' needs a 'kind'");
  DegradationSpec s;
  try {
    s = default_spec(parse_kind(j.at("kind").get<std::string>()));
  } catch (const json::exception&) {
    throw Error("config: '" + path + ".kind' must be a string");
  }
  Section r(j, path);
  std::string kind, shape = s.psf_shape == PsfShape::disc ? "disc" : "gaussian";
  r.get("kind", kind);
  r.get_range("blob_count", s.blob_count);
  r.get_interval("blob_radius", s.blob_radius);
  r.get("alpha_floor", s.alpha_floor);
  r.get_interval("psf_radius", s.psf_radius);
  r.get("psf_shape", shape);
  r.get("complete_value", s.complete_value);
  r.get("intensification", s.intensification);
  r.finish();
  if (shape == "disc") {
    s.psf_shape = PsfShape::disc;
  } else if (shape == "gaussian") {
    s.psf_shape = PsfShape::gaussian;
  } else {
    throw Error("config: '" + path + ".psf_shape' must be 'disc' or 'gaussian'");
  }
  return s;
}

json spec_json(const DegradationSpec& s) {
  return json{{"kind", to_string(s.kind)},
              {"blob_count", {s.blob_count.lo, s.blob_count.hi}},
              {"blob_radius", {s.blob_radius.lo, s.blob_radius.hi}},
              {"alpha_floor", s.alpha_floor},
              {"psf_radius", {s.psf_radius.lo, s.psf_radius.hi}},
              {"psf_shape", s.psf_shape == PsfShape::disc ? "disc" : "gaussian"},
              {"complete_value", s.complete_value},
              {"intensification", s.intensification}};
}

}  // namespace

json loss_to_json(const LossConfig& c) {
  return json{{"alpha0", c.alpha0},
              {"alpha_joint", c.alpha_joint},
              {"msssim_levels", c.msssim_levels},
              {"msssim_window", c.msssim_window},
              {"msssim_sigma", c.msssim_sigma},
              {"gaussian_weighted_l1", c.gaussian_weighted_l1},
              {"gaussian_weight_sigma", c.gaussian_weight_sigma},
              {"c1", c.c1},
              {"c2", c.c2}};
}

json train_to_json(const TrainConfig& c) {
  return json{{"iterations", c.iterations},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"checkpoint_every", c.checkpoint_every},
              {"augment", c.augment}};
}

json adapt_to_json(const AdaptConfig& c) {
  return json{{"n_updates", c.n_updates},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"scope", to_string(c.scope)}};
}

RunConfigFile default_run_config() {
  RunConfigFile c;
  for (OccluderKind k : kAllKinds) c.degradations.push_back(default_spec(k));
  return c;
}

RunConfigFile run_config_from_json(const json& j) {
  RunConfigFile c = default_run_config();
  Section root(j, "$");
  if (!j.contains("schema_version")) throw Error("config: missing 'schema_version'");
  root.get("schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion) {
    throw Error("config: schema_version " + std::to_string(c.schema_version) + " is not supported (expected " +
                std::to_string(kConfigSchemaVersion) + ")");
  }
  if (const json* s = root.sub("seed")) {
    if (!s->is_number_unsigned() && !(s->is_number_integer() && s->get<int64_t>() >= 0)) {
      throw Error("config: '$.seed' must be a non-negative integer");
    }
    c.seed = s->get<uint64_t>();
  }
  if (const json* d = root.sub("dataset")) {
    Section r(*d, "$.dataset");
    r.get("height", c.dataset.height);
    r.get("width", c.dataset.width);
    r.get("count_per_kind", c.dataset.count_per_kind);
    r.get("train_fraction", c.dataset.train_fraction);
    r.finish();
  }
  if (const json* d = root.sub("degradations")) {
    if (!d->is_array()) throw Error("config: '$.degradations' must be an array");
    c.degradations.clear();
    for (size_t i = 0; i < d->size(); ++i) {
      c.degradations.push_back(read_spec((*d)[i], "$.degradations[" + std::to_string(i) + "]"));
    }
  }
  if (const json* d = root.sub("network")) {
    Section r(*d, "$.network");
    r.get("scales", c.network.scales);
    r.get("base_channels", c.network.base_channels);
    r.get("in_channels", c.network.in_channels);
    r.get("activation_slope", c.network.activation_slope);
    r.get("mask_enabled", c.network.mask_enabled);
    r.get("residual_enabled", c.network.residual_enabled);
    r.get("feature_recurrence_enabled", c.network.feature_recurrence_enabled);
    r.get("mask_scales", c.network.mask_scales);
    r.finish();
  }
  if (const json* d = root.sub("loss")) {
    Section r(*d, "$.loss");
    r.get("alpha0", c.loss.alpha0);
    r.get("alpha_joint", c.loss.alpha_joint);
    r.get("msssim_levels", c.loss.msssim_levels);
    r.get("msssim_window", c.loss.msssim_window);
    r.get("msssim_sigma", c.loss.msssim_sigma);
    r.get("gaussian_weighted_l1", c.loss.gaussian_weighted_l1);
    r.get("gaussian_weight_sigma", c.loss.gaussian_weight_sigma);
    r.get("c1", c.loss.c1);
    r.get("c2", c.loss.c2);
    r.finish();
  }
  if (const json* d = root.sub("train")) {
    Section r(*d, "$.train");
    r.get("iterations", c.train.iterations);
    r.get("batch_size", c.train.batch_size);
    r.get("learning_rate", c.train.learning_rate);
    r.get("adam_beta1", c.train.adam_beta1);
    r.get("adam_beta2", c.train.adam_beta2);
    r.get("checkpoint_every", c.train.checkpoint_every);
    r.get("augment", c.train.augment);
    r.finish();
  }
  if (const json* d = root.sub("adapt")) {
    Section r(*d, "$.adapt");
    std::string scope(to_string(c.adapt.scope));
    r.get("n_updates", c.adapt.n_updates);
    r.get("learning_rate", c.adapt.learning_rate);
    r.get("adam_beta1", c.adapt.adam_beta1);
    r.get("adam_beta2", c.adapt.adam_beta2);
    r.get("scope", scope);
    r.finish();
    c.adapt.scope = parse_adapt_scope(scope);
  }
  if (const json* d = root.sub("paths")) {
    Section r(*d, "$.paths");
    r.get("base_images", c.paths.base_images);
    r.get("data", c.paths.data);
    r.get("out", c.paths.out);
    r.finish();
  }
  root.finish();

  c.train.network = c.network;
  c.train.loss = c.loss;
  c.adapt.loss = c.loss;
  c.network.validate();
  c.loss.validate();
  c.train.validate();
  c.adapt.validate();
  check_kind_ordering(c.degradations);
  if (c.dataset.height <= 0 || c.dataset.width <= 0) throw Error("config: dataset dimensions must be positive");
  if (c.dataset.count_per_kind < 0) throw Error("config: count_per_kind must be >= 0");
  if (!(c.dataset.train_fraction >= 0.0 && c.dataset.train_fraction <= 1.0)) {
    throw Error("config: train_fraction must lie in [0, 1]");
  }
  return c;
}

RunConfigFile load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json run_config_to_json(const RunConfigFile& c) {
  json specs = json::array();
  for (const auto& s : c.degradations) specs.push_back(spec_json(s));
  json j{{"schema_version", c.schema_version},
         {"dataset",
          {{"height", c.dataset.height},
           {"width", c.dataset.width},
           {"count_per_kind", c.dataset.count_per_kind},
           {"train_fraction", c.dataset.train_fraction}}},
         {"degradations", specs},
         {"network", config_to_json(c.network)},
         {"loss", loss_to_json(c.loss)},
         {"train", train_to_json(c.train)},
         {"adapt", adapt_to_json(c.adapt)},
         {"paths", {{"base_images", c.paths.base_images}, {"data", c.paths.data}, {"out", c.paths.out}}}};
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

uint64_t resolve_seed(std::optional<uint64_t> flag, const RunConfigFile& config) {
  if (flag) return *flag;
  if (config.seed) return *config.seed;
  if (const char* env = std::getenv("OCCLUSIM_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw Error("OCCLUSIM_SEED must be a non-negative integer, got '" + std::string(env) + "'");
    return v;
  }
  return 0;
}

}  // namespace occlusim
