#include "pds/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace pds::kernels {

namespace {

// Blocking chosen so the register tiles plus a B panel stay cache resident.
constexpr int64_t kColBlock = 512;
constexpr int64_t kDepthBlock = 256;
constexpr int64_t kTileCols = 32;

#if defined(__GNUC__) || defined(__clang__)

using v8df = double __attribute__((vector_size(64)));

inline v8df load8(const double* p) {
  v8df v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8df v) { std::memcpy(p, &v, sizeof(v)); }

// 4 x 32 register tile (16 vector accumulators). The accumulators live
// across the whole k panel; each k step is 4 broadcasts, 4 B loads and 16
// FMAs, with the k additions in ascending order per element.
template <int kRows>
inline void gemm_tile(int64_t k0, int64_t k1, const double* __restrict a, int64_t lda,
                      int64_t i, const double* __restrict b, int64_t ldb, int64_t j,
                      double* __restrict c, int64_t ldc) {
  v8df acc[kRows][4];
  for (int r = 0; r < kRows; ++r)
    for (int q = 0; q < 4; ++q) acc[r][q] = load8(c + (i + r) * ldc + j + 8 * q);
  for (int64_t k = k0; k < k1; ++k) {
    const double* __restrict brow = b + k * ldb + j;
    const v8df b0 = load8(brow), b1 = load8(brow + 8), b2 = load8(brow + 16),
               b3 = load8(brow + 24);
    for (int r = 0; r < kRows; ++r) {
      const v8df av = v8df{} + a[(i + r) * lda + k];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
      acc[r][2] += av * b2;
      acc[r][3] += av * b3;
    }
  }
  for (int r = 0; r < kRows; ++r)
    for (int q = 0; q < 4; ++q) store8(c + (i + r) * ldc + j + 8 * q, acc[r][q]);
}

#else

template <int kRows>
inline void gemm_tile(int64_t k0, int64_t k1, const double* __restrict a, int64_t lda,
                      int64_t i, const double* __restrict b, int64_t ldb, int64_t j,
                      double* __restrict c, int64_t ldc) {
  double acc[kRows][kTileCols];
  for (int r = 0; r < kRows; ++r)
    for (int jj = 0; jj < kTileCols; ++jj) acc[r][jj] = c[(i + r) * ldc + j + jj];
  for (int64_t k = k0; k < k1; ++k) {
    const double* __restrict brow = b + k * ldb + j;
    for (int r = 0; r < kRows; ++r) {
      const double av = a[(i + r) * lda + k];
      for (int jj = 0; jj < kTileCols; ++jj) acc[r][jj] += av * brow[jj];
    }
  }
  for (int r = 0; r < kRows; ++r)
    for (int jj = 0; jj < kTileCols; ++jj) c[(i + r) * ldc + j + jj] = acc[r][jj];
}

#endif

inline void gemm_nn_block(int64_t i0, int64_t i1, int64_t j0, int64_t j1, int64_t k0,
                          int64_t k1, const double* __restrict a, int64_t lda,
                          const double* __restrict b, int64_t ldb, double* __restrict c,
                          int64_t ldc) {
  const int64_t j_tiles_end = j0 + (j1 - j0) / kTileCols * kTileCols;
  int64_t i = i0;
  for (; i + 6 <= i1; i += 6) {
    for (int64_t j = j0; j < j_tiles_end; j += kTileCols)
      gemm_tile<6>(k0, k1, a, lda, i, b, ldb, j, c, ldc);
  }
  for (; i + 4 <= i1; i += 4) {
    for (int64_t j = j0; j < j_tiles_end; j += kTileCols)
      gemm_tile<4>(k0, k1, a, lda, i, b, ldb, j, c, ldc);
  }
  for (; i < i1; ++i) {
    for (int64_t j = j0; j < j_tiles_end; j += kTileCols)
      gemm_tile<1>(k0, k1, a, lda, i, b, ldb, j, c, ldc);
  }
  if (j_tiles_end < j1) {
    for (i = i0; i < i1; ++i) {
      const double* arow = a + i * lda;
      double* crow = c + i * ldc;
      for (int64_t k = k0; k < k1; ++k) {
        const double v = arow[k];
        const double* __restrict brow = b + k * ldb;
        for (int64_t j = j_tiles_end; j < j1; ++j) crow[j] += v * brow[j];
      }
    }
  }
}

}  // namespace

void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda, const double* b,
             int64_t ldb, double* c, int64_t ldc, bool accumulate) {
  if (!accumulate) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) std::memset(c + i * ldc, 0, static_cast<size_t>(n) * sizeof(double));
  }
  constexpr int64_t kRowBlock = 48;
  for (int64_t j0 = 0; j0 < n; j0 += kColBlock) {
    const int64_t j1 = std::min(j0 + kColBlock, n);
    for (int64_t k0 = 0; k0 < k; k0 += kDepthBlock) {
      const int64_t k1 = std::min(k0 + kDepthBlock, k);
#pragma omp parallel for schedule(static)
      for (int64_t i0 = 0; i0 < m; i0 += kRowBlock) {
        gemm_nn_block(i0, std::min(i0 + kRowBlock, m), j0, j1, k0, k1, a, lda, b, ldb, c, ldc);
      }
    }
  }
}

void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda, const double* b,
             int64_t ldb, double* c, int64_t ldc, bool accumulate) {
  // C[i,j] += sum_k A[k,i] * B[k,j]; parallel over C rows.
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* crow = c + i * ldc;
    if (!accumulate) std::memset(crow, 0, static_cast<size_t>(n) * sizeof(double));
    for (int64_t kk = 0; kk < k; ++kk) {
      const double v = a[kk * lda + i];
      const double* __restrict brow = b + kk * ldb;
      for (int64_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  }
}

void transpose(int64_t rows, int64_t cols, const double* src, int64_t ld_src, double* dst,
               int64_t ld_dst) {
#pragma omp parallel for schedule(static)
  for (int64_t j = 0; j < cols; ++j) {
    double* drow = dst + j * ld_dst;
    for (int64_t i = 0; i < rows; ++i) drow[i] = src[i * ld_src + j];
  }
}

void conv1d_forward(int64_t batch, int64_t time, int64_t cin, int64_t cout, int64_t ksize,
                    int64_t stride, int64_t pad, const double* x, const double* w,
                    const double* bias, double* y, int64_t out_time) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < out_time; ++t) {
      double* __restrict yrow = y + (b * out_time + t) * cout;
      if (bias)
        std::memcpy(yrow, bias, static_cast<size_t>(cout) * sizeof(double));
      else
        std::memset(yrow, 0, static_cast<size_t>(cout) * sizeof(double));
      const int64_t start = t * stride - pad;
      for (int64_t kk = 0; kk < ksize; ++kk) {
        const int64_t tin = start + kk;
        if (tin < 0 || tin >= time) continue;
        const double* xrow = x + (b * time + tin) * cin;
        const double* wk = w + kk * cin * cout;
        for (int64_t ci = 0; ci < cin; ++ci) {
          const double v = xrow[ci];
          const double* __restrict wrow = wk + ci * cout;
          for (int64_t co = 0; co < cout; ++co) yrow[co] += v * wrow[co];
        }
      }
    }
  }
}

void conv1d_backward_input(int64_t batch, int64_t time, int64_t cin, int64_t cout,
                           int64_t ksize, int64_t stride, int64_t pad, const double* gy,
                           const double* wt, double* gx, int64_t out_time) {
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < out_time; ++t) {
      const double* gyrow = gy + (b * out_time + t) * cout;
      const int64_t start = t * stride - pad;
      for (int64_t kk = 0; kk < ksize; ++kk) {
        const int64_t tin = start + kk;
        if (tin < 0 || tin >= time) continue;
        double* __restrict gxrow = gx + (b * time + tin) * cin;
        const double* wk = wt + kk * cout * cin;
        for (int64_t co = 0; co < cout; ++co) {
          const double g = gyrow[co];
          const double* __restrict wrow = wk + co * cin;
          for (int64_t ci = 0; ci < cin; ++ci) gxrow[ci] += g * wrow[ci];
        }
      }
    }
  }
}

void conv1d_backward_kernel(int64_t batch, int64_t time, int64_t cin, int64_t cout,
                            int64_t ksize, int64_t stride, int64_t pad, const double* x,
                            const double* gy, double* gw, int64_t out_time) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t kk = 0; kk < ksize; ++kk) {
    for (int64_t ci = 0; ci < cin; ++ci) {
      double* __restrict gwrow = gw + (kk * cin + ci) * cout;
      for (int64_t b = 0; b < batch; ++b) {
        for (int64_t t = 0; t < out_time; ++t) {
          const int64_t tin = t * stride - pad + kk;
          if (tin < 0 || tin >= time) continue;
          const double v = x[(b * time + tin) * cin + ci];
          if (v == 0.0) continue;
          const double* __restrict gyrow = gy + (b * out_time + t) * cout;
          for (int64_t co = 0; co < cout; ++co) gwrow[co] += v * gyrow[co];
        }
      }
    }
  }
}

void conv1d_backward_bias(int64_t batch, int64_t out_time, int64_t cout, const double* gy,
                          double* gb) {
  for (int64_t r = 0; r < batch * out_time; ++r) {
    const double* __restrict gyrow = gy + r * cout;
    for (int64_t co = 0; co < cout; ++co) gb[co] += gyrow[co];
  }
}

void depthwise_conv1d_forward(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                              int64_t pad, const double* x, const double* w, double* y) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < time; ++t) {
      double* __restrict yrow = y + (b * time + t) * ch;
      std::memset(yrow, 0, static_cast<size_t>(ch) * sizeof(double));
      for (int64_t kk = 0; kk < ksize; ++kk) {
        const int64_t tin = t - pad + kk;
        if (tin < 0 || tin >= time) continue;
        const double* __restrict xrow = x + (b * time + tin) * ch;
        const double* __restrict wk = w + kk * ch;
        for (int64_t c = 0; c < ch; ++c) yrow[c] += xrow[c] * wk[c];
      }
    }
  }
}

void depthwise_conv1d_backward_input(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                                     int64_t pad, const double* gy, const double* w,
                                     double* gx) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < time; ++t) {
      double* __restrict gxrow = gx + (b * time + t) * ch;
      for (int64_t kk = 0; kk < ksize; ++kk) {
        const int64_t tout = t + pad - kk;
        if (tout < 0 || tout >= time) continue;
        const double* __restrict gyrow = gy + (b * time + tout) * ch;
        const double* __restrict wk = w + kk * ch;
        for (int64_t c = 0; c < ch; ++c) gxrow[c] += gyrow[c] * wk[c];
      }
    }
  }
}

void depthwise_conv1d_backward_kernel(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                                      int64_t pad, const double* x, const double* gy,
                                      double* gw) {
#pragma omp parallel for schedule(static)
  for (int64_t kk = 0; kk < ksize; ++kk) {
    double* __restrict gwrow = gw + kk * ch;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t t = 0; t < time; ++t) {
        const int64_t tin = t - pad + kk;
        if (tin < 0 || tin >= time) continue;
        const double* __restrict xrow = x + (b * time + tin) * ch;
        const double* __restrict gyrow = gy + (b * time + t) * ch;
        for (int64_t c = 0; c < ch; ++c) gwrow[c] += xrow[c] * gyrow[c];
      }
    }
  }
}

namespace {

// Cody-Waite split of ln(2) plus a degree-12 polynomial on |r| <= ln(2)/2.
constexpr double kInvLn2 = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;
constexpr double kShift = 6755399441055744.0;  // 1.5 * 2^52, round-to-nearest trick

__attribute__((always_inline)) inline double exp_core(double x) {
  double kd = x * kInvLn2 + kShift;
  const int64_t ki = std::bit_cast<int64_t>(kd) - std::bit_cast<int64_t>(kShift);
  kd -= kShift;
  const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  // exp(r) via Horner with reciprocal-factorial coefficients.
  double p = 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const double scale = std::bit_cast<double>(static_cast<uint64_t>(ki + 1023) << 52);
  return p * scale;
}

}  // namespace

double exp_fast(double x) {
  if (x < -708.0) return 0.0;
  if (x > 709.0) return std::numeric_limits<double>::infinity();
  return exp_core(x);
}

#if defined(__GNUC__) || defined(__clang__)

namespace {

using v8di = int64_t __attribute__((vector_size(64)));

// Eight-lane mirror of exp_core: identical arithmetic per element, so the
// vector and scalar paths agree bit for bit.
inline v8df exp8(v8df x) {
  v8df kd = x * kInvLn2 + kShift;
  v8di ki;
  std::memcpy(&ki, &kd, sizeof(ki));
  ki -= std::bit_cast<int64_t>(kShift);
  kd -= kShift;
  const v8df r = (x - kd * kLn2Hi) - kd * kLn2Lo;
  v8df p = v8df{} + 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const v8di bits = (ki + 1023) << 52;
  v8df scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return x < -708.0 ? v8df{} : p * scale;
}

}  // namespace

void softmax_row(double* row, int64_t n_valid, int64_t n_total) {
  double mx = row[0];
#pragma omp simd reduction(max : mx)
  for (int64_t i = 0; i < n_valid; ++i) mx = std::max(mx, row[i]);
  int64_t i = 0;
  for (; i + 8 <= n_valid; i += 8) {
    v8df x = load8(row + i) - mx;
    store8(row + i, exp8(x));
  }
  for (; i < n_valid; ++i) {
    const double x = row[i] - mx;
    const double e = exp_core(x);
    row[i] = x < -708.0 ? 0.0 : e;
  }
  double sum = 0.0;
#pragma omp simd reduction(+ : sum)
  for (i = 0; i < n_valid; ++i) sum += row[i];
  const double inv = 1.0 / sum;
#pragma omp simd
  for (i = 0; i < n_valid; ++i) row[i] *= inv;
  for (i = n_valid; i < n_total; ++i) row[i] = 0.0;
}

#else

void softmax_row(double* row, int64_t n_valid, int64_t n_total) {
  double mx = row[0];
  for (int64_t i = 1; i < n_valid; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (int64_t i = 0; i < n_valid; ++i) {
    const double x = row[i] - mx;
    const double e = exp_core(x);
    row[i] = x < -708.0 ? 0.0 : e;
    sum += row[i];
  }
  const double inv = 1.0 / sum;
  for (int64_t i = 0; i < n_valid; ++i) row[i] *= inv;
  for (int64_t i = n_valid; i < n_total; ++i) row[i] = 0.0;
}

#endif

void layer_norm_rows(int64_t rows, int64_t ch, const double* x, const double* gain,
                     const double* bias, double eps, double* y, double* xhat,
                     double* inv_std) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* __restrict xr = x + r * ch;
    double* __restrict yr = y + r * ch;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int64_t c = 0;
    for (; c + 4 <= ch; c += 4) {
      s0 += xr[c];
      s1 += xr[c + 1];
      s2 += xr[c + 2];
      s3 += xr[c + 3];
    }
    for (; c < ch; ++c) s0 += xr[c];
    const double mean = ((s0 + s1) + (s2 + s3)) / static_cast<double>(ch);
    double v0 = 0.0, v1 = 0.0, v2 = 0.0, v3 = 0.0;
    c = 0;
    for (; c + 4 <= ch; c += 4) {
      const double d0 = xr[c] - mean, d1 = xr[c + 1] - mean;
      const double d2 = xr[c + 2] - mean, d3 = xr[c + 3] - mean;
      v0 += d0 * d0;
      v1 += d1 * d1;
      v2 += d2 * d2;
      v3 += d3 * d3;
    }
    for (; c < ch; ++c) {
      const double d = xr[c] - mean;
      v0 += d * d;
    }
    const double var = ((v0 + v1) + (v2 + v3)) / static_cast<double>(ch);
    const double istd = 1.0 / std::sqrt(var + eps);
    if (inv_std) inv_std[r] = istd;
    if (xhat) {
      double* __restrict xh = xhat + r * ch;
      for (int64_t i = 0; i < ch; ++i) {
        const double h = (xr[i] - mean) * istd;
        xh[i] = h;
        yr[i] = h * gain[i] + bias[i];
      }
    } else {
      for (int64_t i = 0; i < ch; ++i) yr[i] = (xr[i] - mean) * istd * gain[i] + bias[i];
    }
  }
}

void relu(int64_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void sigmoid(int64_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + exp_fast(-x[i]));
}

void swish(int64_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] / (1.0 + exp_fast(-x[i]));
}

void add_inplace(int64_t n, double* dst, const double* src) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

void axpy(int64_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace pds::kernels
