#pragma once

#include <string>
#include <vector>

#include "pds/encoder.hpp"

namespace pds {

// CLI/config-file level run description. Schema (key: value per line, '#'
// comments, lists comma-separated; unknown keys are errors):
//   preset: pds-base-16            named Table-style preset
//   strides: 2,2,2,2               explicit stages instead of a preset
//   layers: 2,2,6,2
//   dims_mode: same | width-growth | depth-growth
//   stage_dims: 192,224,256,320    one entry per stage for growth modes
//   hidden_dim, heads, ffn_dim, dropout, input_dim
//   block_type: transformer | conformer
//   fusion: on | off
//   seed, batch_size
//   mode: eval | train
struct RunConfig {
  std::string preset;
  std::vector<int64_t> strides;
  std::vector<int64_t> layers;
  std::string dims_mode = "same";
  std::vector<int64_t> stage_dims;
  int64_t hidden_dim = 256;
  int64_t heads = 4;
  int64_t ffn_dim = 2048;
  double dropout = 0.1;
  int64_t input_dim = 80;
  std::string block_type = "transformer";
  bool fusion = true;
  uint64_t seed = 1;
  int64_t batch_size = 8;
  std::string mode = "eval";

  EncoderConfig encoder_config() const;
  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace pds
