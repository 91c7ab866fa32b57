// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mtd {

/// Row-major 2-D array of doubles. Token maps are [tokens, channels];
/// spatial maps are stored channels-last as [height * width, channels].
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0);
    Tensor(int r, int c, std::vector<double> values);

    static Tensor zeros(int r, int c) { return Tensor(r, c, 0.0); }

    std::size_t size() const { return data.size(); }
    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    bool all_finite() const;
    std::string shape_str() const;

    bool operator==(const Tensor& o) const = default;
};

/// A[m,k] * B[k,n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// c += a * b (shapes must agree).
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c);
/// c += a^T * b
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c);
/// c += a * b^T
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c);

/// y += alpha * x
void axpy(double alpha, const Tensor& x, Tensor& y);

void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

/// Spatial grid of a token map, in patches.
struct Grid {
    int h = 0;
    int w = 0;
    int count() const { return h * w; }
    bool operator==(const Grid&) const = default;
};

/// Sparse linear map between spatial grids. Each output cell is a weighted
/// sum of at most four input cells (bilinear, half-pixel centres).
class Resampler {
public:
    Resampler() = default;
    Resampler(Grid from, Grid to);

    Grid from() const { return from_; }
    Grid to() const { return to_; }
    bool is_identity() const { return from_ == to_; }

    /// out[to.count(), c] = M * in[from.count(), c]
    Tensor apply(const Tensor& in) const;
    /// grad_in += M^T * grad_out
    void apply_transpose_acc(const Tensor& grad_out, Tensor& grad_in) const;

private:
    struct Tap {
        int src;
        double weight;
    };
    Grid from_{};
    Grid to_{};
    std::vector<int> offsets_;  // size to.count() + 1
    std::vector<Tap> taps_;
};

}  // namespace mtd
