#include "signet/checkpoint.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "bytes.hpp"
#include "signet/error.hpp"

namespace signet {

namespace {

using nlohmann::json;

constexpr char kCkptMagic[8] = {'S', 'G', 'N', 'T', 'C', 'K', 'P', '1'};

const char* pool_mode_name(PoolMode m) { return m == PoolMode::kMax ? "max" : "mean"; }

PoolMode pool_mode_from_string(const std::string& s) {
  if (s == "max") return PoolMode::kMax;
  if (s == "mean") return PoolMode::kMean;
  throw ConfigError("unknown pool mode '" + s + "'");
}

json config_to_json_obj(const ModelConfig& c) {
  json j;
  j["family"] = family_name(c.family);
  j["window_length"] = c.window_length;
  j["segments"] = c.segments;
  j["d_model"] = c.d_model;
  j["heads"] = c.heads;
  j["blocks"] = c.blocks;
  j["ffn_width"] = c.ffn_width;
  j["conv"] = json::array();
  for (const ConvSpec& s : c.conv) {
    j["conv"].push_back({{"out_channels", s.out_channels},
                         {"kernel", s.kernel},
                         {"stride", s.stride},
                         {"padding", s.padding},
                         {"pool", s.pool},
                         {"pool_mode", pool_mode_name(s.pool_mode)}});
  }
  j["conv_activation"] = activation_name(c.conv_activation);
  j["lstm_hidden"] = c.lstm_hidden;
  j["dense_hidden"] = c.dense_hidden;
  j["dropout"] = c.dropout;
  j["residual"] = c.residual;
  j["layer_norm"] = c.layer_norm;
  j["forget_bias_one"] = c.forget_bias_one;
  j["budget_target"] = c.budget_target;
  return j;
}

ModelConfig config_from_json_obj(const json& j) {
  ModelConfig c;
  try {
    c.family = family_from_string(j.at("family").get<std::string>());
    c.window_length = j.at("window_length").get<std::size_t>();
    c.segments = j.at("segments").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.blocks = j.at("blocks").get<std::size_t>();
    c.ffn_width = j.at("ffn_width").get<std::size_t>();
    c.conv.clear();
    for (const json& s : j.at("conv")) {
      ConvSpec spec;
      spec.out_channels = s.at("out_channels").get<std::size_t>();
      spec.kernel = s.at("kernel").get<std::size_t>();
      spec.stride = s.at("stride").get<std::size_t>();
      spec.padding = s.at("padding").get<std::size_t>();
      spec.pool = s.at("pool").get<std::size_t>();
      spec.pool_mode = pool_mode_from_string(s.at("pool_mode").get<std::string>());
      c.conv.push_back(spec);
    }
    c.conv_activation = activation_from_string(j.at("conv_activation").get<std::string>());
    c.lstm_hidden = j.at("lstm_hidden").get<std::vector<std::size_t>>();
    c.dense_hidden = j.at("dense_hidden").get<std::vector<std::size_t>>();
    c.dropout = j.at("dropout").get<double>();
    c.residual = j.at("residual").get<bool>();
    c.layer_norm = j.at("layer_norm").get<bool>();
    c.forget_bias_one = j.at("forget_bias_one").get<bool>();
    c.budget_target = j.at("budget_target").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("model config json: ") + e.what());
  }
  return c;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
  return config_to_json_obj(config).dump(2);
}

ModelConfig model_config_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ParseError("model config: invalid json");
  return config_from_json_obj(j);
}

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  json header;
  header["config"] = config_to_json_obj(model.config());
  header["seed"] = model.seed();
  header["params"] = json::array();
  for (const Parameter* p : model.parameters()) {
    header["params"].push_back({{"name", p->name}, {"shape", p->value.shape()}});
  }
  const std::string header_text = header.dump();

  std::string buf;
  buf.append(kCkptMagic, sizeof kCkptMagic);
  bytes::put_u32(buf, static_cast<std::uint32_t>(header_text.size()));
  buf += header_text;
  for (const Parameter* p : model.parameters()) {
    for (double v : p->value.data()) bytes::put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes::Reader r(buf, path.string());
  if (r.bytes(sizeof kCkptMagic) != std::string(kCkptMagic, sizeof kCkptMagic)) {
    throw ParseError("'" + path.string() + "': not a checkpoint file");
  }
  const std::string header_text = r.bytes(r.u32());
  json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw ParseError("'" + path.string() + "': corrupt checkpoint header");

  ModelConfig config;
  std::uint64_t seed = 0;
  try {
    config = config_from_json_obj(header.at("config"));
    seed = header.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
  Model model(config, seed);

  const json& params = header.at("params");
  const auto& registry = model.parameters();
  if (params.size() != registry.size()) {
    throw ParseError("'" + path.string() + "': checkpoint lists " + std::to_string(params.size()) +
                     " parameters, model has " + std::to_string(registry.size()));
  }
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const std::string name = params[i].at("name").get<std::string>();
    const auto shape = params[i].at("shape").get<Shape>();
    if (name != registry[i]->name || shape != registry[i]->value.shape()) {
      throw ParseError("'" + path.string() + "': parameter mismatch at '" + name + "'");
    }
    for (double& v : registry[i]->value.data()) v = r.f64();
  }
  if (!r.done()) throw ParseError("'" + path.string() + "': trailing bytes after parameters");
  return model;
}

std::string param_manifest(Model& model) {
  std::string out;
  std::size_t total = 0;
  for (const Parameter* p : model.parameters()) {
    out += p->name;
    out += ' ';
    out += shape_str(p->value.shape());
    out += ' ';
    out += std::to_string(p->size());
    out += '\n';
    total += p->size();
  }
  out += "total " + std::to_string(total) + '\n';
  return out;
}

}  // namespace signet
