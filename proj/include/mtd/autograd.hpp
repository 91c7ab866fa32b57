// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tape-free reverse-mode autodiff over 2-D tensors. Each op allocates a Node
// holding its value and a backward closure; Var::backward() walks the graph
// in reverse topological order. Leaves created with Var::parameter()
// accumulate gradients across backward calls until zeroed.

#pragma once

#include "mtd/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace mtd {

struct Node {
    Tensor value;
    Tensor grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    /// Gradient buffer, allocated as zeros on first use.
    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Var constant(Tensor value);
    static Var parameter(Tensor value);

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    /// Mutable access for optimizers and finite-difference probes.
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad_buffer() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad = Tensor(); }
    bool requires_grad() const { return node_->requires_grad; }
    int rows() const { return node_->value.rows; }
    int cols() const { return node_->value.cols; }
    double item() const;

    /// Reverse pass from a 1x1 output, scaling the seed gradient by `seed`.
    void backward(double seed = 1.0) const;

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& shared() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Differentiable ops. Shapes are checked and violations raise ConfigError.
namespace ag {

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// a * s where s is a trainable 1x1 Var.
Var scale_by(const Var& a, const Var& s);
/// a[r, :] + bias[0, :] for every row.
Var add_row(const Var& a, const Var& bias);
/// x * W + b
Var linear(const Var& x, const Var& weight, const Var& bias);
Var add_n(const std::vector<Var>& terms);

/// Exact error-function GELU.
Var gelu(const Var& a);
Var softplus(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-6);

Var slice_cols(const Var& a, int start, int count);
Var slice_rows(const Var& a, int start, int count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);

/// Column means, shape 1 x cols.
Var mean_rows(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);

/// Spatial resampling of a channels-last map.
Var resample(const Var& a, std::shared_ptr<const Resampler> resampler);
/// 3x3 convolution, stride 1, zero padding. Weight is [9 * Cin, Cout] with
/// row index (ky * 3 + kx) * Cin + cin.
Var conv3x3(const Var& a, Grid grid, const Var& weight, const Var& bias);

/// sum_k gates[0, k] * experts[k]
Var weighted_sum(const Var& gates, const std::vector<Var>& experts);

/// Mean over rows of 1 - cos(a_row, b_row). Zero-norm rows raise NumericError.
Var cosine_distance(const Var& a, const Var& b);
/// Mean over entries of the Huber-style smooth-L1 with transition delta.
Var smooth_l1(const Var& a, const Var& b, double delta);
/// Mean cross-entropy over rows whose label != ignore_label.
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels, int ignore_label);
/// sum_i w_i * BCE(sigmoid(logit_i), target_i) / number of rows with valid_i.
Var weighted_bce_with_logits(const Var& logits, const std::vector<double>& targets,
                             const std::vector<double>& weights, const std::vector<char>& valid);
/// Mean absolute error over entries of rows with valid_i.
Var masked_l1(const Var& pred, const Tensor& target, const std::vector<char>& valid);

}  // namespace ag

// Scalar helpers shared by ops and tests.
double gelu_value(double x);
double softplus_value(double x);
double sigmoid_value(double x);

}  // namespace mtd
