// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/kernels.hpp"

#include "mtd/errors.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

namespace mtd::kernels {

namespace {

void gemm_scalar(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double dot_scalar(std::size_t n, const double* x, const double* y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void mul_scalar(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

const KernelTable kScalar{Isa::Scalar, "scalar", &gemm_scalar, &axpy_scalar, &dot_scalar,
                          &mul_scalar};

const KernelTable* initial_table() {
    if (const char* env = std::getenv("MTD_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return &kScalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (avx2_table() && cpu_has_avx2()) return avx2_table();
            throw ConfigError("MTD_KERNELS=avx2 requested but AVX2 is unavailable");
        }
    }
    if (avx2_table() && cpu_has_avx2()) return avx2_table();
    return &kScalar;
}

const KernelTable*& current() {
    static const KernelTable* table = initial_table();
    return table;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable& active() { return *current(); }

void select(Isa isa) {
    if (isa == Isa::Scalar) {
        current() = &kScalar;
        return;
    }
    if (!avx2_table() || !cpu_has_avx2()) throw ConfigError("AVX2 kernels unavailable on this host");
    current() = avx2_table();
}

}  // namespace mtd::kernels
