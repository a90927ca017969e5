#include "iconvec/kernels.h"

#include <cmath>
#include <cstring>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace iconvec::kern {

// Row-level bodies shared by the OpenMP and serial entry points. Keeping the
// k-loop innermost and ascending fixes the accumulation order.

namespace detail {

inline void gemm_nn_row(const double* A, const double* B, double* C, int k, int m, int i, bool acc) {
    double* c = C + size_t(i) * m;
    if (!acc) std::memset(c, 0, sizeof(double) * m);
    const double* a = A + size_t(i) * k;
    for (int p = 0; p < k; ++p) {
        double av = a[p];
        const double* b = B + size_t(p) * m;
        for (int j = 0; j < m; ++j) c[j] += av * b[j];
    }
}

inline void gemm_nt_row(const double* A, const double* B, double* C, int k, int m, int i, bool acc) {
    const double* a = A + size_t(i) * k;
    double* c = C + size_t(i) * m;
    int j = 0;
    // Eight independent dot products per pass: separate accumulator chains
    // give ILP under strict FP where a single reduction cannot reorder.
    for (; j + 8 <= m; j += 8) {
        const double* b0 = B + size_t(j) * k;
        const double* b1 = B + size_t(j + 1) * k;
        const double* b2 = B + size_t(j + 2) * k;
        const double* b3 = B + size_t(j + 3) * k;
        const double* b4 = B + size_t(j + 4) * k;
        const double* b5 = B + size_t(j + 5) * k;
        const double* b6 = B + size_t(j + 6) * k;
        const double* b7 = B + size_t(j + 7) * k;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0, s5 = 0.0, s6 = 0.0, s7 = 0.0;
        for (int p = 0; p < k; ++p) {
            double av = a[p];
            s0 += av * b0[p];
            s1 += av * b1[p];
            s2 += av * b2[p];
            s3 += av * b3[p];
            s4 += av * b4[p];
            s5 += av * b5[p];
            s6 += av * b6[p];
            s7 += av * b7[p];
        }
        c[j] = acc ? c[j] + s0 : s0;
        c[j + 1] = acc ? c[j + 1] + s1 : s1;
        c[j + 2] = acc ? c[j + 2] + s2 : s2;
        c[j + 3] = acc ? c[j + 3] + s3 : s3;
        c[j + 4] = acc ? c[j + 4] + s4 : s4;
        c[j + 5] = acc ? c[j + 5] + s5 : s5;
        c[j + 6] = acc ? c[j + 6] + s6 : s6;
        c[j + 7] = acc ? c[j + 7] + s7 : s7;
    }
    for (; j < m; ++j) {
        const double* b = B + size_t(j) * k;
        double s = 0.0;
        for (int p = 0; p < k; ++p) s += a[p] * b[p];
        c[j] = acc ? c[j] + s : s;
    }
}

inline void gemm_tn_row(const double* A, const double* B, double* C, int n, int k, int m, int p, bool acc) {
    double* c = C + size_t(p) * m;
    if (!acc) std::memset(c, 0, sizeof(double) * m);
    for (int i = 0; i < n; ++i) {
        double av = A[size_t(i) * k + p];
        const double* b = B + size_t(i) * m;
        for (int j = 0; j < m; ++j) c[j] += av * b[j];
    }
}

inline void softmax_row(double* row, int cols, int limit) {
    double mx = row[0];
    for (int j = 1; j < limit; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < limit; ++j) {
        row[j] = std::exp(row[j] - mx);
        sum += row[j];
    }
    double inv = 1.0 / sum;
    for (int j = 0; j < limit; ++j) row[j] *= inv;
    for (int j = limit; j < cols; ++j) row[j] = 0.0;
}

inline void softmax_backward_row(const double* y, const double* dy, double* dx, int cols, int limit) {
    double dot = 0.0;
    for (int j = 0; j < limit; ++j) dot += y[j] * dy[j];
    for (int j = 0; j < limit; ++j) dx[j] += y[j] * (dy[j] - dot);
    (void)cols;
}

inline void layernorm_row(const double* x, const double* gain, const double* bias, double* y,
                          double* mean, double* rstd, int cols, double eps) {
    double mu = 0.0;
    for (int j = 0; j < cols; ++j) mu += x[j];
    mu /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= cols;
    double rs = 1.0 / std::sqrt(var + eps);
    *mean = mu;
    *rstd = rs;
    for (int j = 0; j < cols; ++j) y[j] = (x[j] - mu) * rs * gain[j] + bias[j];
}

inline void layernorm_backward_row(const double* x, const double* gain, double mean, double rstd,
                                   const double* dy, double* dx, int cols) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int j = 0; j < cols; ++j) {
        double xhat = (x[j] - mean) * rstd;
        double dxhat = dy[j] * gain[j];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
    }
    double inv = 1.0 / cols;
    for (int j = 0; j < cols; ++j) {
        double xhat = (x[j] - mean) * rstd;
        double dxhat = dy[j] * gain[j];
        dx[j] += rstd * (dxhat - inv * sum_dxhat - xhat * inv * sum_dxhat_xhat);
    }
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

inline double gelu_one(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
inline double gelu_grad_one(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// One attention head: rows of q/k/v are strided by d, head block at `off`.
inline void attention_head_fwd(const double* q, const double* k, const double* v, double* probs,
                               double* out, int n, int m, int d, int dh, int off,
                               const int* limits, double scale) {
    for (int i = 0; i < n; ++i) {
        const int lim = limits ? limits[i] : m;
        double* prow = probs + size_t(i) * m;
        const double* qi = q + size_t(i) * d + off;
        for (int j = 0; j < lim; ++j) {
            const double* kj = k + size_t(j) * d + off;
            double s = 0.0;
            for (int e = 0; e < dh; ++e) s += qi[e] * kj[e];
            prow[j] = s * scale;
        }
        softmax_row(prow, m, lim);
        double* oi = out + size_t(i) * d + off;
        for (int e = 0; e < dh; ++e) oi[e] = 0.0;
        for (int j = 0; j < lim; ++j) {
            const double p = prow[j];
            const double* vj = v + size_t(j) * d + off;
            for (int e = 0; e < dh; ++e) oi[e] += p * vj[e];
        }
    }
}

inline void attention_head_bwd(const double* q, const double* k, const double* v,
                               const double* probs, const double* dout, double* dq, double* dk,
                               double* dv, int n, int m, int d, int dh, int off,
                               const int* limits, double scale) {
    std::vector<double> dp(m);
    for (int i = 0; i < n; ++i) {
        const int lim = limits ? limits[i] : m;
        const double* prow = probs + size_t(i) * m;
        const double* doi = dout + size_t(i) * d + off;
        // dP = dout_i . v_j ; dV_j += P[i,j] * dout_i
        for (int j = 0; j < lim; ++j) {
            const double* vj = v + size_t(j) * d + off;
            double* dvj = dv + size_t(j) * d + off;
            double s = 0.0;
            const double p = prow[j];
            for (int e = 0; e < dh; ++e) {
                s += doi[e] * vj[e];
                dvj[e] += p * doi[e];
            }
            dp[j] = s;
        }
        // Softmax backward, then dS rescales into dQ and dK.
        double dot = 0.0;
        for (int j = 0; j < lim; ++j) dot += prow[j] * dp[j];
        const double* qi = q + size_t(i) * d + off;
        double* dqi = dq + size_t(i) * d + off;
        for (int j = 0; j < lim; ++j) {
            double ds = prow[j] * (dp[j] - dot) * scale;
            const double* kj = k + size_t(j) * d + off;
            double* dkj = dk + size_t(j) * d + off;
            for (int e = 0; e < dh; ++e) {
                dqi[e] += ds * kj[e];
                dkj[e] += ds * qi[e];
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// OpenMP versions

namespace {
inline bool par(size_t work) {
#if defined(_OPENMP)
    return work >= 4096 && !omp_in_parallel();
#else
    (void)work;
    return false;
#endif
}
}  // namespace

void gemm_nn(const double* A, const double* B, double* C, int n, int k, int m, bool acc) {
#pragma omp parallel for schedule(static) if (par(size_t(n) * k * m))
    for (int i = 0; i < n; ++i) detail::gemm_nn_row(A, B, C, k, m, i, acc);
}

void gemm_nt(const double* A, const double* B, double* C, int n, int k, int m, bool acc) {
#pragma omp parallel for schedule(static) if (par(size_t(n) * k * m))
    for (int i = 0; i < n; ++i) detail::gemm_nt_row(A, B, C, k, m, i, acc);
}

void gemm_tn(const double* A, const double* B, double* C, int n, int k, int m, bool acc) {
#pragma omp parallel for schedule(static) if (par(size_t(n) * k * m))
    for (int p = 0; p < k; ++p) detail::gemm_tn_row(A, B, C, n, k, m, p, acc);
}

void add(const double* a, const double* b, double* out, size_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (ptrdiff_t i = 0; i < ptrdiff_t(n); ++i) out[i] = a[i] + b[i];
}

void axpy(double alpha, const double* x, double* y, size_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (ptrdiff_t i = 0; i < ptrdiff_t(n); ++i) y[i] += alpha * x[i];
}

void softmax_rows(double* x, int rows, int cols, const int* limits) {
#pragma omp parallel for schedule(static) if (par(size_t(rows) * cols))
    for (int i = 0; i < rows; ++i)
        detail::softmax_row(x + size_t(i) * cols, cols, limits ? limits[i] : cols);
}

void softmax_backward_rows(const double* y, const double* dy, double* dx, int rows, int cols,
                           const int* limits) {
#pragma omp parallel for schedule(static) if (par(size_t(rows) * cols))
    for (int i = 0; i < rows; ++i)
        detail::softmax_backward_row(y + size_t(i) * cols, dy + size_t(i) * cols,
                                     dx + size_t(i) * cols, cols, limits ? limits[i] : cols);
}

void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* mean, double* rstd, int rows, int cols, double eps) {
#pragma omp parallel for schedule(static) if (par(size_t(rows) * cols))
    for (int i = 0; i < rows; ++i)
        detail::layernorm_row(x + size_t(i) * cols, gain, bias, y + size_t(i) * cols, mean + i,
                              rstd + i, cols, eps);
}

void layernorm_backward_rows(const double* x, const double* gain, const double* mean,
                             const double* rstd, const double* dy, double* dx, double* dgain,
                             double* dbias, int rows, int cols) {
#pragma omp parallel for schedule(static) if (par(size_t(rows) * cols))
    for (int i = 0; i < rows; ++i)
        detail::layernorm_backward_row(x + size_t(i) * cols, gain, mean[i], rstd[i],
                                       dy + size_t(i) * cols, dx + size_t(i) * cols, cols);
    // Parameter gradients accumulate over rows in fixed order.
    for (int i = 0; i < rows; ++i) {
        const double* xi = x + size_t(i) * cols;
        const double* dyi = dy + size_t(i) * cols;
        for (int j = 0; j < cols; ++j) {
            dgain[j] += dyi[j] * (xi[j] - mean[i]) * rstd[i];
            dbias[j] += dyi[j];
        }
    }
}

void gelu(const double* x, double* y, size_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (ptrdiff_t i = 0; i < ptrdiff_t(n); ++i) y[i] = detail::gelu_one(x[i]);
}

void gelu_backward(const double* x, const double* dy, double* dx, size_t n) {
#pragma omp parallel for schedule(static) if (par(n))
    for (ptrdiff_t i = 0; i < ptrdiff_t(n); ++i) dx[i] += dy[i] * detail::gelu_grad_one(x[i]);
}

void attention_forward(const double* q, const double* k, const double* v, double* probs,
                       double* out, int n, int m, int d, int n_heads, const int* limits) {
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(double(dh));
#pragma omp parallel for schedule(static) if (par(size_t(n) * m * d))
    for (int h = 0; h < n_heads; ++h)
        detail::attention_head_fwd(q, k, v, probs + size_t(h) * n * m, out, n, m, d, dh, h * dh,
                                   limits, scale);
}

void attention_backward(const double* q, const double* k, const double* v, const double* probs,
                        const double* dout, double* dq, double* dk, double* dv, int n, int m,
                        int d, int n_heads, const int* limits) {
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(double(dh));
#pragma omp parallel for schedule(static) if (par(size_t(n) * m * d))
    for (int h = 0; h < n_heads; ++h)
        detail::attention_head_bwd(q, k, v, probs + size_t(h) * n * m, dout, dq, dk, dv, n, m, d,
                                   dh, h * dh, limits, scale);
}

// ---------------------------------------------------------------------------
// Serial reference

namespace serial {

void gemm_nn(const double* A, const double* B, double* C, int n, int k, int m, bool acc) {
    for (int i = 0; i < n; ++i) detail::gemm_nn_row(A, B, C, k, m, i, acc);
}
void gemm_nt(const double* A, const double* B, double* C, int n, int k, int m, bool acc) {
    for (int i = 0; i < n; ++i) detail::gemm_nt_row(A, B, C, k, m, i, acc);
}
void gemm_tn(const double* A, const double* B, double* C, int n, int k, int m, bool acc) {
    for (int p = 0; p < k; ++p) detail::gemm_tn_row(A, B, C, n, k, m, p, acc);
}
void add(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void axpy(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
void softmax_rows(double* x, int rows, int cols, const int* limits) {
    for (int i = 0; i < rows; ++i)
        detail::softmax_row(x + size_t(i) * cols, cols, limits ? limits[i] : cols);
}
void softmax_backward_rows(const double* y, const double* dy, double* dx, int rows, int cols,
                           const int* limits) {
    for (int i = 0; i < rows; ++i)
        detail::softmax_backward_row(y + size_t(i) * cols, dy + size_t(i) * cols,
                                     dx + size_t(i) * cols, cols, limits ? limits[i] : cols);
}
void layernorm_rows(const double* x, const double* gain, const double* bias, double* y,
                    double* mean, double* rstd, int rows, int cols, double eps) {
    for (int i = 0; i < rows; ++i)
        detail::layernorm_row(x + size_t(i) * cols, gain, bias, y + size_t(i) * cols, mean + i,
                              rstd + i, cols, eps);
}
void layernorm_backward_rows(const double* x, const double* gain, const double* mean,
                             const double* rstd, const double* dy, double* dx, double* dgain,
                             double* dbias, int rows, int cols) {
    for (int i = 0; i < rows; ++i)
        detail::layernorm_backward_row(x + size_t(i) * cols, gain, mean[i], rstd[i],
                                       dy + size_t(i) * cols, dx + size_t(i) * cols, cols);
    for (int i = 0; i < rows; ++i) {
        const double* xi = x + size_t(i) * cols;
        const double* dyi = dy + size_t(i) * cols;
        for (int j = 0; j < cols; ++j) {
            dgain[j] += dyi[j] * (xi[j] - mean[i]) * rstd[i];
            dbias[j] += dyi[j];
        }
    }
}
void gelu(const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = detail::gelu_one(x[i]);
}
void gelu_backward(const double* x, const double* dy, double* dx, size_t n) {
    for (size_t i = 0; i < n; ++i) dx[i] += dy[i] * detail::gelu_grad_one(x[i]);
}
void attention_forward(const double* q, const double* k, const double* v, double* probs,
                       double* out, int n, int m, int d, int n_heads, const int* limits) {
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(double(dh));
    for (int h = 0; h < n_heads; ++h)
        detail::attention_head_fwd(q, k, v, probs + size_t(h) * n * m, out, n, m, d, dh, h * dh,
                                   limits, scale);
}
void attention_backward(const double* q, const double* k, const double* v, const double* probs,
                        const double* dout, double* dq, double* dk, double* dv, int n, int m,
                        int d, int n_heads, const int* limits) {
    const int dh = d / n_heads;
    const double scale = 1.0 / std::sqrt(double(dh));
    for (int h = 0; h < n_heads; ++h)
        detail::attention_head_bwd(q, k, v, probs + size_t(h) * n * m, dout, dq, dk, dv, n, m, d,
                                   dh, h * dh, limits, scale);
}

}  // namespace serial

uint64_t hash_mix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace iconvec::kern
