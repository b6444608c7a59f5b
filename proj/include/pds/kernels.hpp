#pragma once

#include <cstdint>

namespace pds::kernels {

// OpenMP-parallel numeric kernels. Every parallel loop runs over disjoint
// output elements and keeps a fixed serial order inside each element, so
// results are bit-identical for any thread count.

// C[M,N] (+)= A[M,K] * B[K,N], row strides lda/ldb/ldc. accumulate=false
// overwrites C. k additions happen in ascending order per element.
void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda,
             const double* b, int64_t ldb, double* c, int64_t ldc, bool accumulate);

// C[M,N] (+)= A^T * B where A is [K,M]. Used for weight gradients
// (X^T * dY) without materializing the transpose.
void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda,
             const double* b, int64_t ldb, double* c, int64_t ldc, bool accumulate);

// dst[j,i] = src[i,j]; src is [rows,cols] with row stride ld_src,
// dst is [cols,rows] with row stride ld_dst.
void transpose(int64_t rows, int64_t cols, const double* src, int64_t ld_src,
               double* dst, int64_t ld_dst);

// y[b,t',co] = bias[co] + sum_{k,ci} x[b, t'*stride - pad + k, ci] * w[k,ci,co]
// with zero padding outside [0,T). Shapes: x[B,T,Ci], w[K,Ci,Co], y[B,T',Co].
void conv1d_forward(int64_t batch, int64_t time, int64_t cin, int64_t cout, int64_t ksize,
                    int64_t stride, int64_t pad, const double* x, const double* w,
                    const double* bias, double* y, int64_t out_time);

// Scatter form, parallel over batch items (disjoint per item).
// wt is the kernel transposed to [K,Co,Ci]. gx must be zero-initialized.
void conv1d_backward_input(int64_t batch, int64_t time, int64_t cin, int64_t cout,
                           int64_t ksize, int64_t stride, int64_t pad, const double* gy,
                           const double* wt, double* gx, int64_t out_time);

// Gather form, parallel over (k,ci). Accumulates into gw.
void conv1d_backward_kernel(int64_t batch, int64_t time, int64_t cin, int64_t cout,
                            int64_t ksize, int64_t stride, int64_t pad, const double* x,
                            const double* gy, double* gw, int64_t out_time);

void conv1d_backward_bias(int64_t batch, int64_t out_time, int64_t cout, const double* gy,
                          double* gb);

// Depthwise conv, stride 1: y[b,t,c] = sum_k x[b,t-pad+k,c] * w[k,c].
void depthwise_conv1d_forward(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                              int64_t pad, const double* x, const double* w, double* y);
void depthwise_conv1d_backward_input(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                                     int64_t pad, const double* gy, const double* w, double* gx);
void depthwise_conv1d_backward_kernel(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                                      int64_t pad, const double* x, const double* gy, double* gw);

// Branch-light exp with ~1e-13 relative accuracy, written so the softmax
// loops vectorize. Flushes to 0 below -708 (covers the -1e9 mask offset).
double exp_fast(double x);

// In-place softmax over row[0..n_valid); entries at and beyond n_valid are
// set to exactly 0. Requires n_valid >= 1.
void softmax_row(double* row, int64_t n_valid, int64_t n_total);

// Per-row layer norm over x[rows, ch]: xhat = (x - mean) / sqrt(var + eps),
// y = xhat * gain + bias. xhat / inv_std outputs are optional (backward cache).
void layer_norm_rows(int64_t rows, int64_t ch, const double* x, const double* gain,
                     const double* bias, double eps, double* y, double* xhat, double* inv_std);

// y = x elementwise ops
void relu(int64_t n, const double* x, double* y);
void sigmoid(int64_t n, const double* x, double* y);
void swish(int64_t n, const double* x, double* y);
void add_inplace(int64_t n, double* dst, const double* src);
void axpy(int64_t n, double alpha, const double* x, double* y);

}  // namespace pds::kernels
