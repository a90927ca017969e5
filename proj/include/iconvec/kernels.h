#pragma once

#include <cstddef>
#include <cstdint>

// Dense double-precision kernels behind the tape ops. The default versions
// parallelize independent rows/elements with OpenMP; kern::serial holds the
// plain reference implementations used as the oracle in tests and the
// benchmark baseline. Per-output accumulation order is identical in both,
// so results match bit for bit at any thread count.

namespace iconvec::kern {

// C[n x m] = (acc ? C : 0) + A[n x k] * B[k x m]
void gemm_nn(const double* A, const double* B, double* C, int n, int k, int m, bool acc = false);
// C[n x m] = (acc ? C : 0) + A[n x k] * B[m x k]^T
void gemm_nt(const double* A, const double* B, double* C, int n, int k, int m, bool acc = false);
// C[k x m] = (acc ? C : 0) + A[n x k]^T * B[n x m]
void gemm_tn(const double* A, const double* B, double* C, int n, int k, int m, bool acc = false);

void add(const double* a, const double* b, double* out, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);  // y += alpha * x

// In-place row softmax over the prefix [0, limit[i]); entries past the
// limit become 0. limits == nullptr means full rows.
void softmax_rows(double* x, int rows, int cols, const int* limits);
// dx += jacobian-vector product given y = softmax(x) and upstream dy.
void softmax_backward_rows(const double* y, const double* dy, double* dx, int rows, int cols,
                           const int* limits);

// Per-row layer norm with learned gain/bias; saves mean and reciprocal
// standard deviation for the backward pass.
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* mean, double* rstd, int rows, int cols, double eps);
void layernorm_backward_rows(const double* x, const double* gain, const double* mean,
                             const double* rstd, const double* dy, double* dx, double* dgain,
                             double* dbias, int rows, int cols);

void gelu(const double* x, double* y, size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, size_t n);  // dx += ...

// Scaled dot-product attention over all heads in one call. q is n x d and
// k/v are m x d, all row-major with the heads as column blocks of width
// d/n_heads. probs (n_heads x n x m) stores the softmax output for the
// backward pass; out is n x d. limits as in softmax_rows.
void attention_forward(const double* q, const double* k, const double* v, double* probs,
                       double* out, int n, int m, int d, int n_heads, const int* limits);
// Accumulates into dq, dk, dv given the saved probs and dout.
void attention_backward(const double* q, const double* k, const double* v, const double* probs,
                        const double* dout, double* dq, double* dk, double* dv, int n, int m,
                        int d, int n_heads, const int* limits);

namespace serial {
void gemm_nn(const double* A, const double* B, double* C, int n, int k, int m, bool acc = false);
void gemm_nt(const double* A, const double* B, double* C, int n, int k, int m, bool acc = false);
void gemm_tn(const double* A, const double* B, double* C, int n, int k, int m, bool acc = false);
void add(const double* a, const double* b, double* out, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);
void softmax_rows(double* x, int rows, int cols, const int* limits);
void softmax_backward_rows(const double* y, const double* dy, double* dx, int rows, int cols,
                           const int* limits);
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* mean, double* rstd, int rows, int cols, double eps);
void layernorm_backward_rows(const double* x, const double* gain, const double* mean,
                             const double* rstd, const double* dy, double* dx, double* dgain,
                             double* dbias, int rows, int cols);
void gelu(const double* x, double* y, size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, size_t n);
void attention_forward(const double* q, const double* k, const double* v, double* probs,
                       double* out, int n, int m, int d, int n_heads, const int* limits);
void attention_backward(const double* q, const double* k, const double* v, const double* probs,
                        const double* dout, double* dq, double* dk, double* dv, int n, int m,
                        int d, int n_heads, const int* limits);
}  // namespace serial

// splitmix64; used to derive deterministic per-site dropout streams.
uint64_t hash_mix(uint64_t x);

}  // namespace iconvec::kern
