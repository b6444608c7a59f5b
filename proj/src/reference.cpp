#include "pds/reference.hpp"

#include <cmath>
#include <vector>

namespace pds::ref {

void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda, const double* b,
             int64_t ldb, double* c, int64_t ldc, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * ldc + j] : 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += a[i * lda + kk] * b[kk * ldb + j];
      c[i * ldc + j] = acc;
    }
  }
}

void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda, const double* b,
             int64_t ldb, double* c, int64_t ldc, bool accumulate) {
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * ldc + j] : 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += a[kk * lda + i] * b[kk * ldb + j];
      c[i * ldc + j] = acc;
    }
  }
}

void conv1d_forward(int64_t batch, int64_t time, int64_t cin, int64_t cout, int64_t ksize,
                    int64_t stride, int64_t pad, const double* x, const double* w,
                    const double* bias, double* y, int64_t out_time) {
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < out_time; ++t) {
      for (int64_t co = 0; co < cout; ++co) {
        double acc = bias ? bias[co] : 0.0;
        for (int64_t kk = 0; kk < ksize; ++kk) {
          const int64_t tin = t * stride - pad + kk;
          if (tin < 0 || tin >= time) continue;
          for (int64_t ci = 0; ci < cin; ++ci)
            acc += x[(b * time + tin) * cin + ci] * w[(kk * cin + ci) * cout + co];
        }
        y[(b * out_time + t) * cout + co] = acc;
      }
    }
  }
}

void depthwise_conv1d_forward(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                              int64_t pad, const double* x, const double* w, double* y) {
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < time; ++t) {
      for (int64_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int64_t kk = 0; kk < ksize; ++kk) {
          const int64_t tin = t - pad + kk;
          if (tin < 0 || tin >= time) continue;
          acc += x[(b * time + tin) * ch + c] * w[kk * ch + c];
        }
        y[(b * time + t) * ch + c] = acc;
      }
    }
  }
}

void softmax_row(double* row, int64_t n_valid, int64_t n_total) {
  double mx = row[0];
  for (int64_t i = 1; i < n_valid; ++i)
    if (row[i] > mx) mx = row[i];
  double sum = 0.0;
  for (int64_t i = 0; i < n_valid; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (int64_t i = 0; i < n_valid; ++i) row[i] /= sum;
  for (int64_t i = n_valid; i < n_total; ++i) row[i] = 0.0;
}

void layer_norm_rows(int64_t rows, int64_t ch, const double* x, const double* gain,
                     const double* bias, double eps, double* y) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * ch;
    double mean = 0.0;
    for (int64_t c = 0; c < ch; ++c) mean += xr[c];
    mean /= static_cast<double>(ch);
    double var = 0.0;
    for (int64_t c = 0; c < ch; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(ch);
    const double istd = 1.0 / std::sqrt(var + eps);
    for (int64_t c = 0; c < ch; ++c) y[r * ch + c] = (xr[c] - mean) * istd * gain[c] + bias[c];
  }
}

void attention_head(int64_t tq, int64_t tk, int64_t dh, double scale, const double* q,
                    int64_t ldq, const double* k, int64_t ldk, const double* v, int64_t ldv,
                    int64_t valid_k, double* out, int64_t ldo) {
  std::vector<double> scores(static_cast<size_t>(tk));
  for (int64_t i = 0; i < tq; ++i) {
    for (int64_t j = 0; j < valid_k; ++j) {
      double acc = 0.0;
      for (int64_t d = 0; d < dh; ++d) acc += q[i * ldq + d] * k[j * ldk + d];
      scores[static_cast<size_t>(j)] = acc * scale;
    }
    softmax_row(scores.data(), valid_k, tk);
    for (int64_t d = 0; d < dh; ++d) {
      double acc = 0.0;
      for (int64_t j = 0; j < valid_k; ++j) acc += scores[static_cast<size_t>(j)] * v[j * ldv + d];
      out[i * ldo + d] = acc;
    }
  }
}

}  // namespace pds::ref
