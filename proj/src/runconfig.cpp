#include "pds/runconfig.hpp"

#include <fstream>
#include <sstream>

namespace pds {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<int64_t> parse_int_list(const std::string& v, const std::string& key) {
  std::vector<int64_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) throw ConfigError(key + ": empty list entry");
    try {
      out.push_back(std::stoll(part));
    } catch (const std::exception&) {
      throw ConfigError(key + ": '" + part + "' is not an integer");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

int64_t parse_int(const std::string& v, const std::string& key) {
  try {
    return std::stoll(trim(v));
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not an integer");
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    return std::stod(trim(v));
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + v + "' is not a number");
  }
}

bool parse_on_off(const std::string& v, const std::string& key) {
  const std::string t = trim(v);
  if (t == "on" || t == "true" || t == "1") return true;
  if (t == "off" || t == "false" || t == "0") return false;
  throw ConfigError(key + ": expected on|off, got '" + v + "'");
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "preset")
    cfg.preset = trim(value);
  else if (key == "strides")
    cfg.strides = parse_int_list(value, key);
  else if (key == "layers")
    cfg.layers = parse_int_list(value, key);
  else if (key == "dims_mode")
    cfg.dims_mode = trim(value);
  else if (key == "stage_dims")
    cfg.stage_dims = parse_int_list(value, key);
  else if (key == "hidden_dim")
    cfg.hidden_dim = parse_int(value, key);
  else if (key == "heads")
    cfg.heads = parse_int(value, key);
  else if (key == "ffn_dim")
    cfg.ffn_dim = parse_int(value, key);
  else if (key == "dropout")
    cfg.dropout = parse_double(value, key);
  else if (key == "input_dim")
    cfg.input_dim = parse_int(value, key);
  else if (key == "block_type")
    cfg.block_type = trim(value);
  else if (key == "fusion")
    cfg.fusion = parse_on_off(value, key);
  else if (key == "seed")
    cfg.seed = static_cast<uint64_t>(parse_int(value, key));
  else if (key == "batch_size")
    cfg.batch_size = parse_int(value, key);
  else if (key == "mode")
    cfg.mode = trim(value);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t sep = line.find(':');
    if (sep == std::string::npos) sep = line.find('=');
    if (sep == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key: value'");
    const std::string key = trim(line.substr(0, sep));
    const std::string value = trim(line.substr(sep + 1));
    apply_kv(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

void RunConfig::validate() const {
  if (preset.empty() && (strides.empty() || layers.empty()))
    throw ConfigError("config: need either a preset or explicit strides+layers");
  if (!preset.empty() && (!strides.empty() || !layers.empty()))
    throw ConfigError("config: preset and explicit stages are mutually exclusive");
  if (!strides.empty() && strides.size() != layers.size())
    throw ConfigError("config: strides and layers must have equal length");
  if (dims_mode != "same" && dims_mode != "width-growth" && dims_mode != "depth-growth")
    throw ConfigError("config: dims_mode must be same|width-growth|depth-growth");
  if (dims_mode != "same" && stage_dims.empty())
    throw ConfigError("config: " + dims_mode + " requires stage_dims, one per stage");
  if (dims_mode == "same" && !stage_dims.empty())
    throw ConfigError("config: stage_dims requires a growth dims_mode");
  if (mode != "eval" && mode != "train")
    throw ConfigError("config: mode must be eval|train");
  block_type_from_string(block_type);
}

EncoderConfig RunConfig::encoder_config() const {
  validate();
  EncoderConfig cfg;
  if (!preset.empty()) {
    cfg = preset_config(preset, hidden_dim, heads, ffn_dim);
  } else {
    cfg.heads = heads;
    cfg.ffn_dim = ffn_dim;
    for (size_t i = 0; i < strides.size(); ++i)
      cfg.stages.push_back({strides[i], layers[i], hidden_dim, 5});
  }
  if (!stage_dims.empty()) {
    if (stage_dims.size() != cfg.stages.size())
      throw ConfigError("config: stage_dims must list one dim per stage (" +
                        std::to_string(cfg.stages.size()) + " stages)");
    for (size_t i = 0; i < cfg.stages.size(); ++i) cfg.stages[i].hidden_dim = stage_dims[i];
  }
  cfg.block_type = block_type_from_string(block_type);
  cfg.dropout = dropout;
  cfg.input_dim = input_dim;
  cfg.validate();
  return cfg;
}

}  // namespace pds
