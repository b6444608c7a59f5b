#include "pds/attention.hpp"

#include <cmath>
#include <cstring>

#include "pds/kernels.hpp"

namespace pds {

MultiHeadAttention::MultiHeadAttention(const std::string& name, int64_t dim, int64_t heads,
                                       Rng& rng)
    : dim_(dim),
      heads_(heads),
      head_dim_(heads > 0 ? dim / heads : 0),
      scale_(heads > 0 ? 1.0 / std::sqrt(static_cast<double>(dim / heads)) : 0.0),
      wq_(name + ".wq", dim, dim, rng),
      wk_(name + ".wk", dim, dim, rng),
      wv_(name + ".wv", dim, dim, rng),
      wo_(name + ".wo", dim, dim, rng) {
  if (heads < 1 || dim % heads != 0)
    throw ConfigError(name + ": dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
}

void MultiHeadAttention::collect_params(std::vector<Parameter*>& out) {
  wq_.collect_params(out);
  wk_.collect_params(out);
  wv_.collect_params(out);
  wo_.collect_params(out);
}

void MultiHeadAttention::set_training(bool on) {
  training_ = on;
  wq_.set_training(on);
  wk_.set_training(on);
  wv_.set_training(on);
  wo_.set_training(on);
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const ValidMask& key_mask, bool causal,
                                   Tensor* weights_out) {
  const int64_t batch = q.dim(0), tq = q.dim(1), tk = k.dim(1);
  for (int64_t len : key_mask.lengths)
    if (len < 1) throw InputError("attention: item with no valid key positions");

  Tensor qp = wq_.forward(q);
  for (int64_t i = 0; i < qp.numel(); ++i) qp[i] *= scale_;
  Tensor kp = wk_.forward(k);
  Tensor vp = wv_.forward(v);

  const bool store = training_ || weights_out != nullptr;
  Tensor weights;
  if (store) weights = Tensor({batch, heads_, tq, tk});

  Tensor core({batch, tq, dim_});
  Tensor kt({head_dim_, tk});
  Tensor smat({tq, tk});
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t valid = key_mask.lengths[static_cast<size_t>(b)];
    for (int64_t h = 0; h < heads_; ++h) {
      const double* qh = qp.data() + b * tq * dim_ + h * head_dim_;
      const double* kh = kp.data() + b * tk * dim_ + h * head_dim_;
      const double* vh = vp.data() + b * tk * dim_ + h * head_dim_;
      kernels::transpose(tk, head_dim_, kh, dim_, kt.data(), tk);
      kernels::gemm_nn(tq, tk, head_dim_, qh, dim_, kt.data(), tk, smat.data(), tk, false);
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < tq; ++i) {
        const int64_t n_valid = causal ? std::min(valid, i + 1) : valid;
        kernels::softmax_row(smat.data() + i * tk, n_valid, tk);
      }
      if (store)
        std::memcpy(weights.data() + ((b * heads_ + h) * tq) * tk, smat.data(),
                    static_cast<size_t>(tq * tk) * sizeof(double));
      kernels::gemm_nn(tq, head_dim_, tk, smat.data(), tk, vh, dim_,
                       core.data() + b * tq * dim_ + h * head_dim_, dim_, false);
    }
  }

  if (weights_out) *weights_out = weights;
  if (training_) {
    q_scaled_ = std::move(qp);
    k_proj_ = std::move(kp);
    v_proj_ = std::move(vp);
    weights_ = std::move(weights);
    key_mask_ = key_mask;
    causal_ = causal;
  }
  return wo_.forward(core);
}

AttentionGrads MultiHeadAttention::backward(const Tensor& gy) {
  Tensor gcore = wo_.backward(gy);
  const int64_t batch = gcore.dim(0), tq = gcore.dim(1);
  const int64_t tk = k_proj_.dim(1);

  Tensor gq(q_scaled_.shape());
  Tensor gk(k_proj_.shape());
  Tensor gv(v_proj_.shape());
  Tensor vt({head_dim_, tk});
  Tensor gw({tq, tk});
  Tensor tmp({tk, tq});
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t h = 0; h < heads_; ++h) {
      const double* goh = gcore.data() + b * tq * dim_ + h * head_dim_;
      const double* qh = q_scaled_.data() + b * tq * dim_ + h * head_dim_;
      const double* kh = k_proj_.data() + b * tk * dim_ + h * head_dim_;
      const double* vh = v_proj_.data() + b * tk * dim_ + h * head_dim_;
      const double* wh = weights_.data() + ((b * heads_ + h) * tq) * tk;

      // dW = dOut . V^T
      kernels::transpose(tk, head_dim_, vh, dim_, vt.data(), tk);
      kernels::gemm_nn(tq, tk, head_dim_, goh, dim_, vt.data(), tk, gw.data(), tk, false);
      // softmax backward; rows beyond the valid prefix hold zero weights and
      // therefore produce zero gradient.
#pragma omp parallel for schedule(static)
      for (int64_t i = 0; i < tq; ++i) {
        const double* wr = wh + i * tk;
        double* gr = gw.data() + i * tk;
        double dot = 0.0;
        for (int64_t j = 0; j < tk; ++j) dot += gr[j] * wr[j];
        for (int64_t j = 0; j < tk; ++j) gr[j] = wr[j] * (gr[j] - dot);
      }
      // dQ = dS . K
      kernels::gemm_nn(tq, head_dim_, tk, gw.data(), tk, kh, dim_,
                       gq.data() + b * tq * dim_ + h * head_dim_, dim_, false);
      // dK = dS^T . Q
      kernels::transpose(tq, tk, gw.data(), tk, tmp.data(), tq);
      kernels::gemm_nn(tk, head_dim_, tq, tmp.data(), tq, qh, dim_,
                       gk.data() + b * tk * dim_ + h * head_dim_, dim_, false);
      // dV = W^T . dOut
      kernels::transpose(tq, tk, wh, tk, tmp.data(), tq);
      kernels::gemm_nn(tk, head_dim_, tq, tmp.data(), tq, goh, dim_,
                       gv.data() + b * tk * dim_ + h * head_dim_, dim_, false);
    }
  }
  for (int64_t i = 0; i < gq.numel(); ++i) gq[i] *= scale_;

  AttentionGrads grads;
  grads.query = wq_.backward(gq);
  grads.key = wk_.backward(gk);
  grads.value = wv_.backward(gv);
  return grads;
}

}  // namespace pds
