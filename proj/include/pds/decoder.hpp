#pragma once

#include "pds/blocks.hpp"
#include "pds/encoder.hpp"

namespace pds {

struct DecoderConfig {
  int64_t num_layers = 6;
  int64_t hidden_dim = 256;
  int64_t heads = 4;
  int64_t ffn_dim = 2048;
  int64_t vocab_size = 0;
  double dropout = 0.1;

  void validate() const;
};

// Pre-norm block: causal self-attention, cross-attention, feed-forward.
class DecoderLayer : public Module {
 public:
  DecoderLayer(const std::string& name, const DecoderConfig& cfg, Rng& rng, Rng* dropout_rng);

  Tensor forward(const Tensor& x, const ValidMask& tgt_mask, const Tensor& enc_out,
                 const ValidMask& enc_mask, Tensor* cross_weights);
  // Returns dLoss/dx; encoder gradient accumulates into *g_enc.
  Tensor backward(const Tensor& gy, Tensor* g_enc);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  LayerNorm ln_self, ln_cross, ln_ffn;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;

 private:
  Dropout drop_self_, drop_cross_, drop_ffn_;
  ValidMask tgt_mask_;
};

class Decoder : public Module {
 public:
  Decoder(DecoderConfig cfg, uint64_t seed);

  struct ForwardResult {
    Tensor logits;  // [B, T_tgt, vocab]
    std::vector<Tensor> cross_attention;  // per layer, [B, h, T_tgt, T_enc]
    ValidMask tgt_mask;
  };

  // Every target must be non-empty and begin with BOS (caller's convention);
  // ragged targets are padded internally.
  ForwardResult forward(const Tensor& enc_out, const ValidMask& enc_mask,
                        const std::vector<std::vector<int64_t>>& targets,
                        bool want_weights = false);
  // Gradient wrt enc_out given dLoss/dlogits.
  Tensor backward(const Tensor& glogits);

  // Argmax decoding for one item until EOS or max_len; returns the tokens
  // generated after BOS, without the EOS.
  std::vector<int64_t> greedy_decode(const Tensor& enc_out_item, const ValidMask& enc_mask,
                                     int64_t bos, int64_t eos, int64_t max_len);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  Rng rng_;
  Embedding embedding_;
  Dropout drop_in_;
  std::vector<std::unique_ptr<DecoderLayer>> layers_;
  LayerNorm ln_final_;
  Linear out_proj_;
  ValidMask tgt_mask_;
  std::vector<int64_t> enc_shape_;
};

}  // namespace pds
