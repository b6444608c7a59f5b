#pragma once

#include <cstdint>
#include <vector>

#include "pds/tensor.hpp"

namespace pds::ops {

// --- 1-D convolution ------------------------------------------------------

// Output length under zero padding; throws InputError when T + 2*pad < K.
int64_t conv1d_out_time(int64_t time, int64_t ksize, int64_t stride, int64_t pad);

// x[B,T,Ci], w[K,Ci,Co], bias[Co] -> y[B,T',Co]
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
              int64_t pad);

// Gradients for input, kernel and bias. gw/gb accumulate; gx is overwritten.
void conv1d_backward(const Tensor& gy, const Tensor& x, const Tensor& w, int64_t stride,
                     int64_t pad, Tensor* gx, std::vector<double>* gw,
                     std::vector<double>* gb);

// Depthwise variant (stride 1): x[B,T,C], w[K,C].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, int64_t pad);
void depthwise_conv1d_backward(const Tensor& gy, const Tensor& x, const Tensor& w,
                               int64_t pad, Tensor* gx, std::vector<double>* gw);

// --- normalization --------------------------------------------------------

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

// Normalizes every slice along the last axis. gain/bias are [C].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache = nullptr);
Tensor layer_norm_backward(const Tensor& gy, const LayerNormCache& cache, const Tensor& gain,
                           std::vector<double>* ggain, std::vector<double>* gbias);

enum class StatsMode { kTrain, kEval };

struct BatchNormCache {
  Tensor xhat;                    // zero at masked positions
  std::vector<double> inv_std;    // per channel
  std::vector<int64_t> lengths;   // mask snapshot
  int64_t n_valid = 0;
};

// Per-channel normalization over valid (batch,time) positions of x[B,T,C].
// Train mode uses batch statistics and updates running_mean/running_var
// (momentum 0.1, unbiased running variance); eval mode uses running stats.
// Masked positions produce exact zeros.
Tensor batch_norm(const Tensor& x, const ValidMask& mask, StatsMode mode, Tensor& running_mean,
                  Tensor& running_var, const Tensor& gain, const Tensor& bias, double eps,
                  double momentum, BatchNormCache* cache = nullptr);
Tensor batch_norm_backward(const Tensor& gy, const BatchNormCache& cache, const Tensor& gain,
                           std::vector<double>* ggain, std::vector<double>* gbias);
Tensor batch_norm_backward_eval(const Tensor& gy, const ValidMask& mask,
                                const Tensor& running_var, const Tensor& gain, double eps);

// --- masked softmax -------------------------------------------------------

// scores[B, ..., T]; row b is valid over the first mask.lengths[b] entries.
// Masked entries come out exactly 0; each valid row sums to 1.
Tensor softmax_masked(const Tensor& scores, const ValidMask& mask);
Tensor softmax_backward(const Tensor& gy, const Tensor& weights);

// --- activations ----------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& gy, const Tensor& x);
Tensor swish(const Tensor& x);
Tensor swish_backward(const Tensor& gy, const Tensor& x);
// glu([a ; b]) = a * sigmoid(b), halves taken along the last axis.
Tensor glu(const Tensor& x);
Tensor glu_backward(const Tensor& gy, const Tensor& x);

// --- position encoding ----------------------------------------------------

// PE(t, 2i) = sin(t / 10000^(2i/D)), PE(t, 2i+1) = cos(same). D must be even.
Tensor sinusoidal_pe(int64_t time, int64_t dim);

// --- loss -----------------------------------------------------------------

// Mean token cross entropy over labels >= 0; labels < 0 are ignored.
// glogits (optional) receives the gradient of the mean loss.
double cross_entropy(const Tensor& logits, const std::vector<int64_t>& labels,
                     Tensor* glogits = nullptr);

}  // namespace pds::ops
