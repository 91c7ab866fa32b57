// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/tensor.hpp"

#include "mtd/errors.hpp"
#include "mtd/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace mtd {

Tensor::Tensor(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw ConfigError("negative tensor dimension");
}

Tensor::Tensor(int r, int c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (r < 0 || c < 0 || data.size() != static_cast<std::size_t>(r) * static_cast<std::size_t>(c)) {
        throw ConfigError("tensor value count does not match shape " + std::to_string(r) + "x" +
                          std::to_string(c));
    }
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) {
        throw ConfigError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
        throw ConfigError("matmul: shape mismatch " + a.shape_str() + " * " + b.shape_str() + " -> " +
                          c.shape_str());
    }
    if (a.rows == 0 || b.cols == 0 || a.cols == 0) return;
    kernels::active().gemm(a.rows, b.cols, a.cols, a.data.data(), b.data.data(), c.data.data());
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows, b.cols);
    matmul_acc(a, b, c);
    return c;
}

Tensor transpose(const Tensor& a) {
    Tensor t(a.cols, a.rows);
    for (int r = 0; r < a.rows; ++r)
        for (int c = 0; c < a.cols; ++c) t(c, r) = a(r, c);
    return t;
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& c) { matmul_acc(transpose(a), b, c); }

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& c) { matmul_acc(a, transpose(b), c); }

void axpy(double alpha, const Tensor& x, Tensor& y) {
    require_same_shape(x, y, "axpy");
    kernels::active().axpy(x.size(), alpha, x.data.data(), y.data.data());
}

namespace {

// Source coordinate and clamped neighbours for one axis, half-pixel centres.
void axis_taps(int out_index, int in_size, int out_size, int& i0, int& i1, double& w1) {
    if (in_size == out_size) {
        i0 = i1 = out_index;
        w1 = 0.0;
        return;
    }
    const double scale = static_cast<double>(in_size) / out_size;
    double src = (out_index + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
    i1 = std::min(i0 + 1, in_size - 1);
    w1 = src - i0;
    if (i1 == i0) w1 = 0.0;
}

}  // namespace

Resampler::Resampler(Grid from, Grid to) : from_(from), to_(to) {
    if (from.h < 1 || from.w < 1 || to.h < 1 || to.w < 1) throw ConfigError("resampler: empty grid");
    offsets_.reserve(static_cast<std::size_t>(to.count()) + 1);
    offsets_.push_back(0);
    for (int y = 0; y < to.h; ++y) {
        int y0, y1;
        double wy;
        axis_taps(y, from.h, to.h, y0, y1, wy);
        for (int x = 0; x < to.w; ++x) {
            int x0, x1;
            double wx;
            axis_taps(x, from.w, to.w, x0, x1, wx);
            const int srcs[4] = {y0 * from.w + x0, y0 * from.w + x1, y1 * from.w + x0, y1 * from.w + x1};
            const double ws[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
            for (int t = 0; t < 4; ++t) {
                if (ws[t] == 0.0) continue;
                // Clamped neighbours can coincide; merge so each source appears once.
                auto it = std::find_if(taps_.begin() + offsets_.back(), taps_.end(),
                                       [&](const Tap& tap) { return tap.src == srcs[t]; });
                if (it != taps_.end()) {
                    it->weight += ws[t];
                } else {
                    taps_.push_back({srcs[t], ws[t]});
                }
            }
            offsets_.push_back(static_cast<int>(taps_.size()));
        }
    }
}

Tensor Resampler::apply(const Tensor& in) const {
    if (in.rows != from_.count()) {
        throw ConfigError("resampler: input has " + std::to_string(in.rows) + " cells, expected " +
                          std::to_string(from_.count()));
    }
    if (is_identity()) return in;
    Tensor out(to_.count(), in.cols);
    const auto& k = kernels::active();
    for (int o = 0; o < to_.count(); ++o) {
        for (int t = offsets_[o]; t < offsets_[o + 1]; ++t) {
            k.axpy(static_cast<std::size_t>(in.cols), taps_[t].weight, in.row(taps_[t].src).data(),
                   out.row(o).data());
        }
    }
    return out;
}

void Resampler::apply_transpose_acc(const Tensor& grad_out, Tensor& grad_in) const {
    if (grad_out.rows != to_.count() || grad_in.rows != from_.count() || grad_in.cols != grad_out.cols) {
        throw ConfigError("resampler: transpose shape mismatch");
    }
    const auto& k = kernels::active();
    for (int o = 0; o < to_.count(); ++o) {
        for (int t = offsets_[o]; t < offsets_[o + 1]; ++t) {
            k.axpy(static_cast<std::size_t>(grad_out.cols), taps_[t].weight, grad_out.row(o).data(),
                   grad_in.row(taps_[t].src).data());
        }
    }
}

}  // namespace mtd
