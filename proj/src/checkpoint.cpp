#include "occlusim/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace occlusim {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'O', 'C', 'C', 'L', 'C', 'K', 'P', 'T'};

ParamGroup parse_group(const std::string& s) {
  if (s == "shared") return ParamGroup::shared;
  if (s == "primary") return ParamGroup::primary;
  if (s == "auxiliary") return ParamGroup::auxiliary;
  throw Error("unknown parameter group '" + s + "'");
}

}  // namespace

json config_to_json(const NetworkConfig& c) {
  return json{{"scales", c.scales},
              {"base_channels", c.base_channels},
              {"in_channels", c.in_channels},
              {"activation_slope", c.activation_slope},
              {"mask_enabled", c.mask_enabled},
              {"residual_enabled", c.residual_enabled},
              {"feature_recurrence_enabled", c.feature_recurrence_enabled},
              {"mask_scales", c.mask_scales}};
}

NetworkConfig config_from_json(const json& j) {
  NetworkConfig c;
  c.scales = j.at("scales").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.activation_slope = j.at("activation_slope").get<float>();
  c.mask_enabled = j.at("mask_enabled").get<bool>();
  c.residual_enabled = j.at("residual_enabled").get<bool>();
  c.feature_recurrence_enabled = j.at("feature_recurrence_enabled").get<bool>();
  c.mask_scales = j.at("mask_scales").get<std::vector<bool>>();
  c.validate();
  return c;
}

void save_checkpoint(const fs::path& path, const ParamSet& params) {
  validate_params(params);
  json arrays = json::array();
  std::vector<float> payload;
  payload.reserve(params.count());
  params.for_each([&](ParamGroup g, const std::string& name, const nn::Tensor& t) {
    arrays.push_back(json{{"name", name}, {"group", to_string(g)}, {"shape", {t.n, t.c, t.h, t.w}}, {"offset", payload.size()}});
    payload.insert(payload.end(), t.data.begin(), t.data.end());
  });
  const json header{{"format", kCheckpointFormat},
                    {"param_version", params.version},
                    {"config", config_to_json(params.config)},
                    {"arrays", arrays}};
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const uint32_t format = kCheckpointFormat;
  const uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&format), sizeof format);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

ParamSet load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  char magic[8];
  uint32_t format = 0;
  uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&format), sizeof format);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error("not a checkpoint file: " + path.string());
  if (format != kCheckpointFormat) {
    throw Error("unsupported checkpoint format " + std::to_string(format) + " in " + path.string());
  }
  if (len > (1u << 26)) throw Error("checkpoint header too large in " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated checkpoint header in " + path.string());

  const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % sizeof(float) != 0) throw Error("checkpoint payload is truncated in " + path.string());
  const size_t total = bytes.size() / sizeof(float);

  ParamSet p;
  try {
    const json header = json::parse(text);
    p.version = header.at("param_version").get<int>();
    p.config = config_from_json(header.at("config"));
    for (const auto& a : header.at("arrays")) {
      const auto name = a.at("name").get<std::string>();
      const auto shape = a.at("shape").get<std::vector<int>>();
      const auto offset = a.at("offset").get<size_t>();
      if (shape.size() != 4) throw Error("array " + name + " needs a 4-d shape");
      nn::Tensor t(shape[0], shape[1], shape[2], shape[3]);
      if (offset + t.size() > total) throw Error("array " + name + " extends past the checkpoint payload");
      std::memcpy(t.data.data(), bytes.data() + offset * sizeof(float), t.size() * sizeof(float));
      auto& group = p.group(parse_group(a.at("group").get<std::string>()));
      if (!group.emplace(name, std::move(t)).second) throw Error("duplicate array " + name);
    }
  } catch (const json::exception& e) {
    throw Error("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  validate_params(p);
  return p;
}

}  // namespace occlusim
