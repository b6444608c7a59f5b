#pragma once

#include "pds/encoder.hpp"

namespace pds {

// Aligns every per-stage representation to the coarsest length via
// layer norm -> non-overlapping conv (kernel = stride = length ratio) ->
// masked batch norm -> relu, then combines the outer-normalized results
// with learnable scalar weights initialized to 1/M.
class FusionModule : public Module {
 public:
  FusionModule(const EncoderConfig& cfg, uint64_t seed);

  // levels bottom-to-top, as produced by PdsEncoder::encode.
  Tensor forward(const std::vector<LevelOutput>& levels);
  // Returns dLoss/d(level m rep) for every stage.
  std::vector<Tensor> backward(const Tensor& gy);

  // Ordered (stage, weight) pairs, 1-based stages.
  std::vector<std::pair<int64_t, double>> weights_report() const;

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  int64_t num_stages() const { return static_cast<int64_t>(pipes_.size()); }
  int64_t length_ratio(int64_t stage) const { return pipes_[static_cast<size_t>(stage)].ratio; }

  Parameter post_gain, post_bias;  // outer layer norm, shared across stages

 private:
  struct Pipeline {
    std::unique_ptr<LayerNorm> pre;
    Parameter conv_kernel, conv_bias;  // [r, D_m, D_M], [D_M]
    std::unique_ptr<BatchNorm1d> bn;
    Parameter weight;  // scalar W_m
    int64_t ratio = 1;
    int64_t in_dim = 0;
    // backward caches
    Tensor padded_in, bn_out, post_in;
    ops::LayerNormCache post_cache;
    Tensor post_out;
    ValidMask in_mask;
  };

  std::vector<Pipeline> pipes_;
  int64_t out_dim_ = 0;
  double eps_ = 1e-5;
  ValidMask final_mask_;
};

}  // namespace pds
