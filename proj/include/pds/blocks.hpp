#pragma once

#include <memory>

#include "pds/attention.hpp"
#include "pds/modules.hpp"

namespace pds {

enum class BlockType { kTransformer, kConformer };

BlockType block_type_from_string(const std::string& s);
std::string to_string(BlockType t);

class FeedForward : public Module {
 public:
  FeedForward(const std::string& name, int64_t dim, int64_t hidden, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  Linear inner, outer;

 private:
  Tensor cached_pre_act_;
};

// One context-interaction layer; both variants keep input and output shapes
// identical and re-zero the padded tail on exit.
class ContextBlock : public Module {
 public:
  virtual Tensor forward(const Tensor& x, const ValidMask& mask) = 0;
  virtual Tensor backward(const Tensor& gy) = 0;
};

// Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
class TransformerBlock : public ContextBlock {
 public:
  TransformerBlock(const std::string& name, int64_t dim, int64_t heads, int64_t ffn_dim,
                   double dropout, Rng& rng);

  Tensor forward(const Tensor& x, const ValidMask& mask) override;
  Tensor backward(const Tensor& gy) override;

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  LayerNorm ln_attn, ln_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;

 private:
  Dropout drop_attn_, drop_ffn_;
  ValidMask mask_;
};

// Pointwise conv -> GLU -> depthwise conv (K=15) -> batch norm -> swish ->
// pointwise conv.
class ConformerConvModule : public Module {
 public:
  ConformerConvModule(const std::string& name, int64_t dim, int64_t depthwise_kernel, Rng& rng);

  Tensor forward(const Tensor& x, const ValidMask& mask);
  Tensor backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  Linear pw_in;   // dim -> 2*dim
  Parameter depthwise;  // [K, dim]
  BatchNorm1d norm;
  Linear pw_out;  // dim -> dim

 private:
  int64_t pad_;
  Tensor cached_glu_in_, cached_dw_in_, cached_bn_out_;
  ValidMask mask_;
};

// Conformer block: half-step FFN, self-attention, convolution module,
// half-step FFN, closing layer norm.
class ConformerBlock : public ContextBlock {
 public:
  ConformerBlock(const std::string& name, int64_t dim, int64_t heads, int64_t ffn_dim,
                 double dropout, Rng& rng);

  Tensor forward(const Tensor& x, const ValidMask& mask) override;
  Tensor backward(const Tensor& gy) override;

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  static constexpr int64_t kDepthwiseKernel = 15;

  LayerNorm ln_ffn1, ln_attn, ln_conv, ln_ffn2, ln_final;
  FeedForward ffn1, ffn2;
  MultiHeadAttention attn;
  ConformerConvModule conv;

 private:
  Dropout drop_ffn1_, drop_attn_, drop_conv_, drop_ffn2_;
  ValidMask mask_;
};

std::unique_ptr<ContextBlock> make_context_block(BlockType type, const std::string& name,
                                                 int64_t dim, int64_t heads, int64_t ffn_dim,
                                                 double dropout, Rng& rng);

}  // namespace pds
