// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense inner-loop kernels. Every kernel has a scalar reference
// implementation and an AVX2/FMA variant; the variant is chosen once at
// runtime from CPUID and can be pinned with MTD_KERNELS=scalar|avx2.
//
// All matrices are row-major and contiguous.

#pragma once

#include <cstddef>

namespace mtd::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
    Isa isa;
    const char* name;
    /// C[m,n] += A[m,k] * B[k,n]
    void (*gemm)(int m, int n, int k, const double* a, const double* b, double* c);
    /// y += alpha * x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    double (*dot)(std::size_t n, const double* x, const double* y);
    /// out = x * y elementwise
    void (*mul)(std::size_t n, const double* x, const double* y, double* out);
};

const KernelTable& scalar_table();

/// nullptr when the build has no AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_has_avx2();

/// Table used by the tensor layer.
const KernelTable& active();

/// Pin the active table. Throws ConfigError if the ISA is unavailable.
void select(Isa isa);

}  // namespace mtd::kernels
