#include "pds/ops.hpp"

#include <cmath>
#include <cstring>

#include "pds/kernels.hpp"

namespace pds::ops {

namespace {

int64_t last_dim(const Tensor& t) { return t.dim(t.rank() - 1); }

int64_t row_count(const Tensor& t) {
  int64_t rows = 1;
  for (int i = 0; i + 1 < t.rank(); ++i) rows *= t.dim(i);
  return rows;
}

}  // namespace

int64_t conv1d_out_time(int64_t time, int64_t ksize, int64_t stride, int64_t pad) {
  if (ksize < 1) throw ConfigError("conv1d: kernel size must be >= 1");
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  if (pad < 0) throw ConfigError("conv1d: negative padding");
  if (time + 2 * pad < ksize)
    throw InputError("conv1d: input too short, T + 2*pad = " + std::to_string(time + 2 * pad) +
                     " < K = " + std::to_string(ksize));
  return (time + 2 * pad - ksize) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
              int64_t pad) {
  if (x.rank() != 3 || w.rank() != 3)
    throw ConfigError("conv1d: expected x[B,T,Ci], w[K,Ci,Co]");
  const int64_t batch = x.dim(0), time = x.dim(1), cin = x.dim(2);
  const int64_t ksize = w.dim(0), cout = w.dim(2);
  if (w.dim(1) != cin)
    throw ConfigError("conv1d: kernel input channels " + std::to_string(w.dim(1)) +
                      " != input channels " + std::to_string(cin));
  if (bias.numel() != cout) throw ConfigError("conv1d: bias size != output channels");
  const int64_t out_time = conv1d_out_time(time, ksize, stride, pad);
  Tensor y({batch, out_time, cout});
  kernels::conv1d_forward(batch, time, cin, cout, ksize, stride, pad, x.data(), w.data(),
                          bias.data(), y.data(), out_time);
  return y;
}

void conv1d_backward(const Tensor& gy, const Tensor& x, const Tensor& w, int64_t stride,
                     int64_t pad, Tensor* gx, std::vector<double>* gw,
                     std::vector<double>* gb) {
  const int64_t batch = x.dim(0), time = x.dim(1), cin = x.dim(2);
  const int64_t ksize = w.dim(0), cout = w.dim(2);
  const int64_t out_time = gy.dim(1);
  if (gx) {
    *gx = Tensor(x.shape());
    // kernel transposed to [K,Co,Ci] so the scatter loop stays contiguous
    Tensor wt({ksize, cout, cin});
    for (int64_t kk = 0; kk < ksize; ++kk)
      kernels::transpose(cin, cout, w.data() + kk * cin * cout, cout,
                         wt.data() + kk * cout * cin, cin);
    kernels::conv1d_backward_input(batch, time, cin, cout, ksize, stride, pad, gy.data(),
                                   wt.data(), gx->data(), out_time);
  }
  if (gw)
    kernels::conv1d_backward_kernel(batch, time, cin, cout, ksize, stride, pad, x.data(),
                                    gy.data(), gw->data(), out_time);
  if (gb) kernels::conv1d_backward_bias(batch, out_time, cout, gy.data(), gb->data());
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, int64_t pad) {
  const int64_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  const int64_t ksize = w.dim(0);
  if (w.dim(1) != ch) throw ConfigError("depthwise_conv1d: channel mismatch");
  if (time + 2 * pad < ksize) throw InputError("depthwise_conv1d: input too short");
  Tensor y({batch, time, ch});
  kernels::depthwise_conv1d_forward(batch, time, ch, ksize, pad, x.data(), w.data(), y.data());
  return y;
}

void depthwise_conv1d_backward(const Tensor& gy, const Tensor& x, const Tensor& w,
                               int64_t pad, Tensor* gx, std::vector<double>* gw) {
  const int64_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  const int64_t ksize = w.dim(0);
  if (gx) {
    *gx = Tensor(x.shape());
    kernels::depthwise_conv1d_backward_input(batch, time, ch, ksize, pad, gy.data(), w.data(),
                                             gx->data());
  }
  if (gw)
    kernels::depthwise_conv1d_backward_kernel(batch, time, ch, ksize, pad, x.data(), gy.data(),
                                              gw->data());
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache) {
  const int64_t ch = last_dim(x);
  if (ch < 1) throw ConfigError("layer_norm: empty channel axis");
  if (gain.numel() != ch || bias.numel() != ch)
    throw ConfigError("layer_norm: gain/bias size != channels");
  const int64_t rows = row_count(x);
  Tensor y(x.shape());
  double* xhat = nullptr;
  double* istd = nullptr;
  if (cache) {
    cache->xhat = Tensor(x.shape());
    cache->inv_std.assign(static_cast<size_t>(rows), 0.0);
    xhat = cache->xhat.data();
    istd = cache->inv_std.data();
  }
  kernels::layer_norm_rows(rows, ch, x.data(), gain.data(), bias.data(), eps, y.data(), xhat,
                           istd);
  return y;
}

Tensor layer_norm_backward(const Tensor& gy, const LayerNormCache& cache, const Tensor& gain,
                           std::vector<double>* ggain, std::vector<double>* gbias) {
  const Tensor& xhat = cache.xhat;
  const int64_t ch = last_dim(xhat);
  const int64_t rows = row_count(xhat);
  Tensor gx(xhat.shape());
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* gyr = gy.data() + r * ch;
    const double* xhr = xhat.data() + r * ch;
    double* gxr = gx.data() + r * ch;
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t c = 0; c < ch; ++c) {
      const double g = gyr[c] * gain[c];
      sum_g += g;
      sum_gx += g * xhr[c];
    }
    const double istd = cache.inv_std[static_cast<size_t>(r)];
    const double mg = sum_g / static_cast<double>(ch);
    const double mgx = sum_gx / static_cast<double>(ch);
    for (int64_t c = 0; c < ch; ++c)
      gxr[c] = (gyr[c] * gain[c] - mg - xhr[c] * mgx) * istd;
  }
  if (ggain && gbias) {
    for (int64_t r = 0; r < rows; ++r) {
      const double* gyr = gy.data() + r * ch;
      const double* xhr = xhat.data() + r * ch;
      for (int64_t c = 0; c < ch; ++c) {
        (*ggain)[static_cast<size_t>(c)] += gyr[c] * xhr[c];
        (*gbias)[static_cast<size_t>(c)] += gyr[c];
      }
    }
  }
  return gx;
}

Tensor batch_norm(const Tensor& x, const ValidMask& mask, StatsMode mode, Tensor& running_mean,
                  Tensor& running_var, const Tensor& gain, const Tensor& bias, double eps,
                  double momentum, BatchNormCache* cache) {
  if (x.rank() != 3) throw ConfigError("batch_norm: expected [B,T,C]");
  const int64_t batch = x.dim(0), time = x.dim(1), ch = x.dim(2);
  Tensor y(x.shape());
  if (mode == StatsMode::kEval) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t t = 0; t < time; ++t) {
        double* yr = y.data() + (b * time + t) * ch;
        if (!mask.valid(b, t)) continue;  // stays zero
        const double* xr = x.data() + (b * time + t) * ch;
        for (int64_t c = 0; c < ch; ++c)
          yr[c] = (xr[c] - running_mean[c]) / std::sqrt(running_var[c] + eps) * gain[c] +
                  bias[c];
      }
    }
    return y;
  }

  const int64_t n_valid = mask.total_valid();
  if (n_valid < 2)
    throw InputError("batch_norm: degenerate batch, " + std::to_string(n_valid) +
                     " valid positions in train mode");
  std::vector<double> mean(static_cast<size_t>(ch), 0.0), var(static_cast<size_t>(ch), 0.0);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < mask.lengths[static_cast<size_t>(b)]; ++t) {
      const double* xr = x.data() + (b * time + t) * ch;
      for (int64_t c = 0; c < ch; ++c) mean[static_cast<size_t>(c)] += xr[c];
    }
  for (int64_t c = 0; c < ch; ++c) mean[static_cast<size_t>(c)] /= static_cast<double>(n_valid);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < mask.lengths[static_cast<size_t>(b)]; ++t) {
      const double* xr = x.data() + (b * time + t) * ch;
      for (int64_t c = 0; c < ch; ++c) {
        const double d = xr[c] - mean[static_cast<size_t>(c)];
        var[static_cast<size_t>(c)] += d * d;
      }
    }
  for (int64_t c = 0; c < ch; ++c) var[static_cast<size_t>(c)] /= static_cast<double>(n_valid);

  for (int64_t c = 0; c < ch; ++c) {
    const double unbiased =
        var[static_cast<size_t>(c)] * static_cast<double>(n_valid) / static_cast<double>(n_valid - 1);
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[static_cast<size_t>(c)];
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
  }

  if (cache) {
    cache->xhat = Tensor(x.shape());
    cache->inv_std.assign(static_cast<size_t>(ch), 0.0);
    cache->lengths = mask.lengths;
    cache->n_valid = n_valid;
    for (int64_t c = 0; c < ch; ++c)
      cache->inv_std[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < time; ++t) {
      if (!mask.valid(b, t)) continue;
      const double* xr = x.data() + (b * time + t) * ch;
      double* yr = y.data() + (b * time + t) * ch;
      for (int64_t c = 0; c < ch; ++c) {
        const double istd = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);
        const double h = (xr[c] - mean[static_cast<size_t>(c)]) * istd;
        if (cache) cache->xhat.data()[(b * time + t) * ch + c] = h;
        yr[c] = h * gain[c] + bias[c];
      }
    }
  }
  return y;
}

Tensor batch_norm_backward(const Tensor& gy, const BatchNormCache& cache, const Tensor& gain,
                           std::vector<double>* ggain, std::vector<double>* gbias) {
  const Tensor& xhat = cache.xhat;
  const int64_t batch = xhat.dim(0), time = xhat.dim(1), ch = xhat.dim(2);
  const double n = static_cast<double>(cache.n_valid);
  std::vector<double> sum_g(static_cast<size_t>(ch), 0.0), sum_gx(static_cast<size_t>(ch), 0.0);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < cache.lengths[static_cast<size_t>(b)]; ++t) {
      const double* gyr = gy.data() + (b * time + t) * ch;
      const double* xhr = xhat.data() + (b * time + t) * ch;
      for (int64_t c = 0; c < ch; ++c) {
        sum_g[static_cast<size_t>(c)] += gyr[c];
        sum_gx[static_cast<size_t>(c)] += gyr[c] * xhr[c];
      }
    }
  Tensor gx(xhat.shape());
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < time; ++t) {
      if (t >= cache.lengths[static_cast<size_t>(b)]) continue;
      const double* gyr = gy.data() + (b * time + t) * ch;
      const double* xhr = xhat.data() + (b * time + t) * ch;
      double* gxr = gx.data() + (b * time + t) * ch;
      for (int64_t c = 0; c < ch; ++c) {
        const size_t cc = static_cast<size_t>(c);
        gxr[c] = gain[c] * cache.inv_std[cc] *
                 (gyr[c] - sum_g[cc] / n - xhr[c] * sum_gx[cc] / n);
      }
    }
  }
  if (ggain && gbias) {
    for (int64_t c = 0; c < ch; ++c) {
      (*ggain)[static_cast<size_t>(c)] += sum_gx[static_cast<size_t>(c)];
      (*gbias)[static_cast<size_t>(c)] += sum_g[static_cast<size_t>(c)];
    }
  }
  return gx;
}

Tensor batch_norm_backward_eval(const Tensor& gy, const ValidMask& mask,
                                const Tensor& running_var, const Tensor& gain, double eps) {
  const int64_t batch = gy.dim(0), time = gy.dim(1), ch = gy.dim(2);
  Tensor gx(gy.shape());
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < time; ++t) {
      if (!mask.valid(b, t)) continue;
      const double* gyr = gy.data() + (b * time + t) * ch;
      double* gxr = gx.data() + (b * time + t) * ch;
      for (int64_t c = 0; c < ch; ++c)
        gxr[c] = gyr[c] * gain[c] / std::sqrt(running_var[c] + eps);
    }
  }
  return gx;
}

Tensor softmax_masked(const Tensor& scores, const ValidMask& mask) {
  const int64_t tlen = last_dim(scores);
  const int64_t batch = scores.dim(0);
  const int64_t rows_per_item = row_count(scores) / batch;
  for (int64_t len : mask.lengths)
    if (len < 1) throw InputError("softmax_masked: all-masked row");
  Tensor w = scores;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t r = 0; r < rows_per_item; ++r) {
      kernels::softmax_row(w.data() + (b * rows_per_item + r) * tlen,
                           mask.lengths[static_cast<size_t>(b)], tlen);
    }
  }
  return w;
}

Tensor softmax_backward(const Tensor& gy, const Tensor& weights) {
  const int64_t tlen = last_dim(weights);
  const int64_t rows = row_count(weights);
  Tensor gx(weights.shape());
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* gyr = gy.data() + r * tlen;
    const double* wr = weights.data() + r * tlen;
    double dot = 0.0;
    for (int64_t i = 0; i < tlen; ++i) dot += gyr[i] * wr[i];
    double* gxr = gx.data() + r * tlen;
    for (int64_t i = 0; i < tlen; ++i) gxr[i] = wr[i] * (gyr[i] - dot);
  }
  return gx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  kernels::relu(x.numel(), x.data(), y.data());
  return y;
}

Tensor relu_backward(const Tensor& gy, const Tensor& x) {
  Tensor gx(x.shape());
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0 ? gy[i] : 0.0;
  return gx;
}

Tensor swish(const Tensor& x) {
  Tensor y(x.shape());
  kernels::swish(x.numel(), x.data(), y.data());
  return y;
}

Tensor swish_backward(const Tensor& gy, const Tensor& x) {
  Tensor gx(x.shape());
  const int64_t n = x.numel();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + kernels::exp_fast(-x[i]));
    gx[i] = gy[i] * (s + x[i] * s * (1.0 - s));
  }
  return gx;
}

Tensor glu(const Tensor& x) {
  const int64_t ch = last_dim(x);
  if (ch % 2 != 0) throw ConfigError("glu: channel count must be even");
  const int64_t half = ch / 2;
  const int64_t rows = row_count(x);
  std::vector<int64_t> shape = x.shape();
  shape.back() = half;
  Tensor y(shape);
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * ch;
    double* yr = y.data() + r * half;
    for (int64_t c = 0; c < half; ++c)
      yr[c] = xr[c] / (1.0 + kernels::exp_fast(-xr[half + c]));
  }
  return y;
}

Tensor glu_backward(const Tensor& gy, const Tensor& x) {
  const int64_t ch = last_dim(x);
  const int64_t half = ch / 2;
  const int64_t rows = row_count(x);
  Tensor gx(x.shape());
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * ch;
    const double* gyr = gy.data() + r * half;
    double* gxr = gx.data() + r * ch;
    for (int64_t c = 0; c < half; ++c) {
      const double s = 1.0 / (1.0 + kernels::exp_fast(-xr[half + c]));
      gxr[c] = gyr[c] * s;
      gxr[half + c] = gyr[c] * xr[c] * s * (1.0 - s);
    }
  }
  return gx;
}

Tensor sinusoidal_pe(int64_t time, int64_t dim) {
  if (dim % 2 != 0) throw ConfigError("sinusoidal_pe: dim must be even");
  Tensor pe({time, dim});
  for (int64_t t = 0; t < time; ++t) {
    for (int64_t i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
      const double angle = static_cast<double>(t) * freq;
      pe(t, 2 * i) = std::sin(angle);
      pe(t, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

double cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels,
                     Tensor* glogits) {
  const int64_t vocab = last_dim(logits);
  const int64_t rows = row_count(logits);
  if (static_cast<int64_t>(labels.size()) != rows)
    throw ConfigError("cross_entropy: label count != logit rows");
  if (glogits) *glogits = Tensor(logits.shape());
  int64_t counted = 0;
  for (int64_t label : labels)
    if (label >= 0) ++counted;
  if (counted == 0) throw ConfigError("cross_entropy: no labels to score");
  double loss = 0.0;
  std::vector<double> probs(static_cast<size_t>(vocab));
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t label = labels[static_cast<size_t>(r)];
    if (label < 0) continue;
    const double* lr = logits.data() + r * vocab;
    double mx = lr[0];
    for (int64_t v = 1; v < vocab; ++v) mx = std::max(mx, lr[v]);
    double sum = 0.0;
    for (int64_t v = 0; v < vocab; ++v) {
      probs[static_cast<size_t>(v)] = kernels::exp_fast(lr[v] - mx);
      sum += probs[static_cast<size_t>(v)];
    }
    loss += std::log(sum) - (lr[label] - mx);
    if (glogits) {
      double* gr = glogits->data() + r * vocab;
      for (int64_t v = 0; v < vocab; ++v)
        gr[v] = (probs[static_cast<size_t>(v)] / sum - (v == label ? 1.0 : 0.0)) /
                static_cast<double>(counted);
    }
  }
  return loss / static_cast<double>(counted);
}

}  // namespace pds::ops
