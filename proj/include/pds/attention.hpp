#pragma once

#include "pds/modules.hpp"

namespace pds {

struct AttentionGrads {
  Tensor query, key, value;
};

// Scaled dot-product multi-head attention with prefix key masking and an
// optional causal constraint. Weights are materialized per head only when
// training or when the caller asks for them.
class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention(const std::string& name, int64_t dim, int64_t heads, Rng& rng);

  // q[B,Tq,D], k/v[B,Tk,D]; key_mask gives valid key counts per item.
  // weights_out, when non-null, receives [B,h,Tq,Tk].
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v, const ValidMask& key_mask,
                 bool causal = false, Tensor* weights_out = nullptr);
  AttentionGrads backward(const Tensor& gy);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  int64_t heads() const { return heads_; }

 private:
  int64_t dim_, heads_, head_dim_;
  double scale_;
  Linear wq_, wk_, wv_, wo_;
  // backward cache
  Tensor q_scaled_, k_proj_, v_proj_, weights_;
  ValidMask key_mask_;
  bool causal_ = false;
};

}  // namespace pds
