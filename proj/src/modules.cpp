#include "pds/modules.hpp"

#include <cmath>
#include <cstring>

#include "pds/kernels.hpp"

namespace pds {

namespace {

int64_t rows_of(const Tensor& t) { return t.numel() / t.dim(t.rank() - 1); }

}  // namespace

Linear::Linear(const std::string& name, int64_t in, int64_t out, Rng& rng)
    : in_(in), out_(out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight = Parameter(name + ".weight", Tensor::uniform({in, out}, rng, -bound, bound));
  bias = Parameter(name + ".bias", Tensor({out}));
}

Tensor Linear::forward(const Tensor& x) {
  if (x.dim(x.rank() - 1) != in_)
    throw ConfigError(weight.name + ": input channels " + std::to_string(x.dim(x.rank() - 1)) +
                      " != " + std::to_string(in_));
  const int64_t rows = rows_of(x);
  std::vector<int64_t> shape = x.shape();
  shape.back() = out_;
  Tensor y(shape);
  const double* b = bias.value.data();
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(y.data() + r * out_, b, static_cast<size_t>(out_) * sizeof(double));
  kernels::gemm_nn(rows, out_, in_, x.data(), in_, weight.value.data(), out_, y.data(), out_,
                   true);
  if (training_) cached_x_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  const int64_t rows = rows_of(gy);
  kernels::gemm_tn(in_, out_, rows, cached_x_.data(), in_, gy.data(), out_,
                   weight.grad().data(), out_, true);
  double* gb = bias.grad().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* gr = gy.data() + r * out_;
    for (int64_t c = 0; c < out_; ++c) gb[c] += gr[c];
  }
  Tensor wt({out_, in_});
  kernels::transpose(in_, out_, weight.value.data(), out_, wt.data(), in_);
  Tensor gx(cached_x_.shape());
  kernels::gemm_nn(rows, in_, out_, gy.data(), out_, wt.data(), in_, gx.data(), in_, false);
  return gx;
}

LayerNorm::LayerNorm(const std::string& name, int64_t dim, double eps) : eps_(eps) {
  gain = Parameter(name + ".gain", Tensor::full({dim}, 1.0));
  bias = Parameter(name + ".bias", Tensor({dim}));
}

Tensor LayerNorm::forward(const Tensor& x) {
  return ops::layer_norm(x, gain.value, bias.value, eps_, training_ ? &cache_ : nullptr);
}

Tensor LayerNorm::backward(const Tensor& gy) {
  return ops::layer_norm_backward(gy, cache_, gain.value, &gain.grad(), &bias.grad());
}

BatchNorm1d::BatchNorm1d(const std::string& name, int64_t dim, double eps, double momentum)
    : eps_(eps), momentum_(momentum) {
  gain = Parameter(name + ".gain", Tensor::full({dim}, 1.0));
  bias = Parameter(name + ".bias", Tensor({dim}));
  running_mean = Tensor({dim});
  running_var = Tensor::full({dim}, 1.0);
}

Tensor BatchNorm1d::forward(const Tensor& x, const ValidMask& mask) {
  last_was_train_ = training_;
  if (!training_) {
    eval_mask_ = mask;
    return ops::batch_norm(x, mask, ops::StatsMode::kEval, running_mean, running_var,
                           gain.value, bias.value, eps_, momentum_, nullptr);
  }
  return ops::batch_norm(x, mask, ops::StatsMode::kTrain, running_mean, running_var, gain.value,
                         bias.value, eps_, momentum_, &cache_);
}

Tensor BatchNorm1d::backward(const Tensor& gy) {
  if (!last_was_train_)
    return ops::batch_norm_backward_eval(gy, eval_mask_, running_var, gain.value, eps_);
  return ops::batch_norm_backward(gy, cache_, gain.value, &gain.grad(), &bias.grad());
}

Tensor Dropout::forward(const Tensor& x) {
  active_ = training_ && p_ > 0.0;
  if (!active_) return x;
  mask_ = Tensor(x.shape());
  std::bernoulli_distribution keep(1.0 - p_);
  const double scale = 1.0 / (1.0 - p_);
  for (int64_t i = 0; i < mask_.numel(); ++i) mask_[i] = keep(*rng_) ? scale : 0.0;
  Tensor y(x.shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = x[i] * mask_[i];
  return y;
}

Tensor Dropout::backward(const Tensor& gy) {
  if (!active_) return gy;
  Tensor gx(gy.shape());
  for (int64_t i = 0; i < gx.numel(); ++i) gx[i] = gy[i] * mask_[i];
  return gx;
}

Embedding::Embedding(const std::string& name, int64_t vocab, int64_t dim, Rng& rng)
    : vocab_(vocab), dim_(dim) {
  weight = Parameter(name + ".weight",
                     Tensor::randn({vocab, dim}, rng, 1.0 / std::sqrt(static_cast<double>(dim))));
}

Tensor Embedding::forward(const std::vector<std::vector<int64_t>>& tokens, int64_t max_time) {
  const int64_t batch = static_cast<int64_t>(tokens.size());
  const double scale = std::sqrt(static_cast<double>(dim_));
  Tensor y({batch, max_time, dim_});
  for (int64_t b = 0; b < batch; ++b) {
    const auto& seq = tokens[static_cast<size_t>(b)];
    for (int64_t t = 0; t < static_cast<int64_t>(seq.size()); ++t) {
      const int64_t id = seq[static_cast<size_t>(t)];
      if (id < 0 || id >= vocab_) throw ConfigError("embedding: token id out of range");
      const double* wr = weight.value.data() + id * dim_;
      double* yr = y.data() + (b * max_time + t) * dim_;
      for (int64_t d = 0; d < dim_; ++d) yr[d] = wr[d] * scale;
    }
  }
  if (training_) cached_tokens_ = tokens;
  return y;
}

void Embedding::backward(const Tensor& gy) {
  const int64_t max_time = gy.dim(1);
  const double scale = std::sqrt(static_cast<double>(dim_));
  double* gw = weight.grad().data();
  for (int64_t b = 0; b < static_cast<int64_t>(cached_tokens_.size()); ++b) {
    const auto& seq = cached_tokens_[static_cast<size_t>(b)];
    for (int64_t t = 0; t < static_cast<int64_t>(seq.size()); ++t) {
      const int64_t id = seq[static_cast<size_t>(t)];
      const double* gr = gy.data() + (b * max_time + t) * dim_;
      for (int64_t d = 0; d < dim_; ++d) gw[id * dim_ + d] += gr[d] * scale;
    }
  }
}

}  // namespace pds
