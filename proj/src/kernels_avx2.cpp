// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after cpu_has_avx2() returned true.

#include "mtd/kernels.hpp"

#if defined(MTD_HAVE_AVX2)

#include <immintrin.h>

namespace mtd::kernels {

namespace {

// Four rows of C at a time so each B row load feeds four FMAs.
void gemm_avx2(int m, int n, int k, const double* a, const double* b, double* c) {
    const int n4 = n & ~3;
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = a + static_cast<std::size_t>(i) * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        double* c0 = c + static_cast<std::size_t>(i) * n;
        double* c1 = c0 + n;
        double* c2 = c1 + n;
        double* c3 = c2 + n;
        for (int j = 0; j < n4; j += 4) {
            __m256d acc0 = _mm256_loadu_pd(c0 + j);
            __m256d acc1 = _mm256_loadu_pd(c1 + j);
            __m256d acc2 = _mm256_loadu_pd(c2 + j);
            __m256d acc3 = _mm256_loadu_pd(c3 + j);
            for (int p = 0; p < k; ++p) {
                const __m256d bv = _mm256_loadu_pd(b + static_cast<std::size_t>(p) * n + j);
                acc0 = _mm256_fmadd_pd(_mm256_set1_pd(a0[p]), bv, acc0);
                acc1 = _mm256_fmadd_pd(_mm256_set1_pd(a1[p]), bv, acc1);
                acc2 = _mm256_fmadd_pd(_mm256_set1_pd(a2[p]), bv, acc2);
                acc3 = _mm256_fmadd_pd(_mm256_set1_pd(a3[p]), bv, acc3);
            }
            _mm256_storeu_pd(c0 + j, acc0);
            _mm256_storeu_pd(c1 + j, acc1);
            _mm256_storeu_pd(c2 + j, acc2);
            _mm256_storeu_pd(c3 + j, acc3);
        }
        for (int j = n4; j < n; ++j) {
            double s0 = c0[j], s1 = c1[j], s2 = c2[j], s3 = c3[j];
            for (int p = 0; p < k; ++p) {
                const double bv = b[static_cast<std::size_t>(p) * n + j];
                s0 += a0[p] * bv;
                s1 += a1[p] * bv;
                s2 += a2[p] * bv;
                s3 += a3[p] * bv;
            }
            c0[j] = s0;
            c1[j] = s1;
            c2[j] = s2;
            c3[j] = s3;
        }
    }
    for (; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n4; j += 4) {
            __m256d acc = _mm256_loadu_pd(crow + j);
            for (int p = 0; p < k; ++p) {
                acc = _mm256_fmadd_pd(_mm256_set1_pd(arow[p]),
                                      _mm256_loadu_pd(b + static_cast<std::size_t>(p) * n + j), acc);
            }
            _mm256_storeu_pd(crow + j, acc);
        }
        for (int j = n4; j < n; ++j) {
            double s = crow[j];
            for (int p = 0; p < k; ++p) s += arow[p] * b[static_cast<std::size_t>(p) * n + j];
            crow[j] = s;
        }
    }
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    }
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void mul_avx2(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

const KernelTable kAvx2{Isa::Avx2, "avx2", &gemm_avx2, &axpy_avx2, &dot_avx2, &mul_avx2};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace mtd::kernels

#else

namespace mtd::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace mtd::kernels

#endif
