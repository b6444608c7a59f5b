#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pds/blocks.hpp"
#include "pds/modules.hpp"

namespace pds {

// One stage: a strided down-sampling module followed by num_layers context
// layers. Stride 1 keeps the length but still applies the conv + norm + PE.
struct StageSpec {
  int64_t stride = 2;
  int64_t num_layers = 0;
  int64_t hidden_dim = 256;
  int64_t ds_kernel = 5;  // odd, so pad (K-1)/2 gives ceil(len/stride)
};

struct EncoderConfig {
  std::vector<StageSpec> stages;
  BlockType block_type = BlockType::kTransformer;
  int64_t heads = 4;
  int64_t ffn_dim = 2048;
  double dropout = 0.1;
  int64_t input_dim = 80;

  int64_t ratio() const;       // product of stage strides
  int64_t output_dim() const;  // hidden dim of the last stage
  int64_t total_layers() const;
  void validate() const;
};

// Named presets; hidden dims are uniform at `hidden_dim` unless the caller
// overrides per stage afterwards.
EncoderConfig preset_config(const std::string& name, int64_t hidden_dim = 256,
                            int64_t heads = 4, int64_t ffn_dim = 2048);
const std::vector<std::string>& preset_names();
bool is_preset(const std::string& name);

// Iterated ceil(len / stride).
int64_t downsampled_length(int64_t length, std::span<const int64_t> strides);
std::vector<int64_t> downsampled_lengths(const std::vector<int64_t>& lengths,
                                         std::span<const int64_t> strides);
std::vector<int64_t> config_strides(const EncoderConfig& cfg);

// Padded batch of input feature sequences.
struct FeatureBatch {
  Tensor features;  // [B, T, input_dim], zero beyond each item's length
  ValidMask mask;
};

FeatureBatch make_feature_batch(const std::vector<Tensor>& items);  // items are [T, dim]

// Per-stage representation with its valid lengths and the nominal
// compression ratio accumulated so far.
struct LevelOutput {
  Tensor rep;  // [B, T_m, D_m]
  ValidMask mask;
  int64_t nominal_ratio = 1;
};

// Strided conv -> layer norm -> sinusoidal position encoding, with the
// padded tail re-zeroed so pad frames never leak into later stages.
class DownsampleModule : public Module {
 public:
  DownsampleModule(const std::string& name, const StageSpec& spec, int64_t in_dim, Rng& rng);

  LevelOutput forward(const LevelOutput& in);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  Parameter kernel, bias;
  LayerNorm norm;

 private:
  int64_t stride_, ksize_, pad_;
  Tensor cached_input_;
  ValidMask out_mask_;
};

// Observation points during encoding, for the analysis hooks.
// kind is "input", "ds" (after a down-sampling module) or "layer"
// (after a context layer); index counts ds points / layers globally.
struct EncodePoint {
  std::string kind;
  int64_t index;
};
using EncodeObserver = std::function<void(const EncodePoint&, const LevelOutput&)>;

class PdsEncoder : public Module {
 public:
  PdsEncoder(EncoderConfig cfg, uint64_t seed);

  // Returns all M per-stage outputs, bottom to top.
  std::vector<LevelOutput> encode(const FeatureBatch& batch,
                                  const EncodeObserver* observer = nullptr);

  // level_grads[m] holds dLoss/d(level m rep); empty tensors mean zero.
  // Returns dLoss/d(input features).
  Tensor backward(std::vector<Tensor> level_grads);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  const EncoderConfig& config() const { return cfg_; }
  int64_t num_stages() const { return static_cast<int64_t>(stages_.size()); }
  int64_t parameter_count();

 private:
  struct Stage {
    std::unique_ptr<DownsampleModule> ds;
    std::vector<std::unique_ptr<ContextBlock>> layers;
  };

  void build(Rng& rng);

  EncoderConfig cfg_;
  std::vector<Stage> stages_;
  Rng rng_;  // used when constructed from a seed (dropout draws)
};

}  // namespace pds
