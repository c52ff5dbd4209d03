#pragma once

// Dense row-major f64 matrix kernels. All three accumulate into c, so the
// same routines serve forward passes (zero-filled c) and gradient
// accumulation. Loop orders keep the inner loop contiguous for both reads
// and writes; gcc/clang vectorize them well enough for desk-scale models.

#include <cstddef>

namespace ovfs::gemm {

// c[m,n] += a[m,k] * b[k,n]
inline void nn(const double* a, const double* b, double* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        double* ci = c + std::size_t(i) * n;
        for (long l = 0; l < k; ++l) {
            const double av = ai[l];
            const double* bl = b + std::size_t(l) * n;
            for (long j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
inline void nt(const double* a, const double* b, double* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        double* ci = c + std::size_t(i) * n;
        for (long j = 0; j < n; ++j) {
            const double* bj = b + std::size_t(j) * k;
            double acc = 0.0;
            for (long l = 0; l < k; ++l) acc += ai[l] * bj[l];
            ci[j] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
inline void tn(const double* a, const double* b, double* c, long m, long k, long n) {
    for (long i = 0; i < m; ++i) {
        const double* ai = a + std::size_t(i) * k;
        const double* bi = b + std::size_t(i) * n;
        for (long l = 0; l < k; ++l) {
            const double av = ai[l];
            double* cl = c + std::size_t(l) * n;
            for (long j = 0; j < n; ++j) cl[j] += av * bi[j];
        }
    }
}

}  // namespace ovfs::gemm
