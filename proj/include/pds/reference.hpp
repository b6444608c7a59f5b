#pragma once

#include <cstdint>

namespace pds::ref {

// Serial, textbook implementations of the hot kernels. These never run in
// the model; the test suite checks the OpenMP kernels against them and the
// kernel benchmark compares their timings.

void gemm_nn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda,
             const double* b, int64_t ldb, double* c, int64_t ldc, bool accumulate);

void gemm_tn(int64_t m, int64_t n, int64_t k, const double* a, int64_t lda,
             const double* b, int64_t ldb, double* c, int64_t ldc, bool accumulate);

void conv1d_forward(int64_t batch, int64_t time, int64_t cin, int64_t cout, int64_t ksize,
                    int64_t stride, int64_t pad, const double* x, const double* w,
                    const double* bias, double* y, int64_t out_time);

void depthwise_conv1d_forward(int64_t batch, int64_t time, int64_t ch, int64_t ksize,
                              int64_t pad, const double* x, const double* w, double* y);

void softmax_row(double* row, int64_t n_valid, int64_t n_total);

void layer_norm_rows(int64_t rows, int64_t ch, const double* x, const double* gain,
                     const double* bias, double eps, double* y);

// Scaled dot-product attention for one head layout [rows, dh] with row
// strides, writing the output rows. Plain three-pass loops.
void attention_head(int64_t tq, int64_t tk, int64_t dh, double scale, const double* q,
                    int64_t ldq, const double* k, int64_t ldk, const double* v, int64_t ldv,
                    int64_t valid_k, double* out, int64_t ldo);

}  // namespace pds::ref
