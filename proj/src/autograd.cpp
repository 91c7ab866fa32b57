// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "mtd/autograd.hpp"

#include "mtd/errors.hpp"
#include "mtd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <unordered_set>

namespace mtd {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.rows != value.rows || grad.cols != value.cols || grad.data.empty()) {
        grad = Tensor(value.rows, value.cols);
    }
    return grad;
}

Var Var::constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

Var Var::parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

double Var::item() const {
    if (rows() != 1 || cols() != 1) throw ConfigError("item() on non-scalar " + value().shape_str());
    return value().data[0];
}

void Var::backward(double seed) const {
    if (rows() != 1 || cols() != 1) throw ConfigError("backward() requires a 1x1 output");
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    Tensor& g = node_->grad_buffer();
    g.data[0] += seed;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.data.empty()) n->backward(*n);
    }
    // Interior gradients are not needed after the pass.
    for (Node* n : order) {
        if (n->backward) n->grad = Tensor();
    }
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

namespace {

double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi * kInvSqrt2;
    return cdf + x * pdf;
}

}  // namespace

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_value(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

namespace ag {

namespace {

Var make_op(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
    if (n->requires_grad) {
        n->inputs.reserve(inputs.size());
        for (auto& in : inputs) n->inputs.push_back(in.shared());
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
    Tensor out = mtd::matmul(a.value(), b.value());
    return make_op(std::move(out), {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad) matmul_nt_acc(self.grad, nb.value, na.grad_buffer());
        if (nb.requires_grad) matmul_tn_acc(na.value, self.grad, nb.grad_buffer());
    });
}

Var transpose(const Var& a) {
    return make_op(mtd::transpose(a.value()), {a}, [](Node& self) {
        Node& na = in(self, 0);
        axpy(1.0, mtd::transpose(self.grad), na.grad_buffer());
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    axpy(1.0, b.value(), out);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t i = 0; i < 2; ++i) {
            Node& n = in(self, i);
            if (n.requires_grad) axpy(1.0, self.grad, n.grad_buffer());
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    axpy(-1.0, b.value(), out);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        if (in(self, 0).requires_grad) axpy(1.0, self.grad, in(self, 0).grad_buffer());
        if (in(self, 1).requires_grad) axpy(-1.0, self.grad, in(self, 1).grad_buffer());
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out(a.rows(), a.cols());
    kernels::active().mul(out.size(), a.value().data.data(), b.value().data.data(), out.data.data());
    return make_op(std::move(out), {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        const auto& k = kernels::active();
        Tensor tmp(self.grad.rows, self.grad.cols);
        if (na.requires_grad) {
            k.mul(tmp.size(), self.grad.data.data(), nb.value.data.data(), tmp.data.data());
            axpy(1.0, tmp, na.grad_buffer());
        }
        if (nb.requires_grad) {
            k.mul(tmp.size(), self.grad.data.data(), na.value.data.data(), tmp.data.data());
            axpy(1.0, tmp, nb.grad_buffer());
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a.rows(), a.cols());
    axpy(s, a.value(), out);
    return make_op(std::move(out), {a}, [s](Node& self) { axpy(s, self.grad, in(self, 0).grad_buffer()); });
}

Var scale_by(const Var& a, const Var& s) {
    if (s.rows() != 1 || s.cols() != 1) throw ConfigError("scale_by: scale must be 1x1");
    const double sv = s.value().data[0];
    Tensor out(a.rows(), a.cols());
    axpy(sv, a.value(), out);
    return make_op(std::move(out), {a, s}, [](Node& self) {
        Node& na = in(self, 0);
        Node& ns = in(self, 1);
        if (na.requires_grad) axpy(ns.value.data[0], self.grad, na.grad_buffer());
        if (ns.requires_grad) {
            ns.grad_buffer().data[0] +=
                kernels::active().dot(self.grad.size(), self.grad.data.data(), na.value.data.data());
        }
    });
}

Var add_row(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw ConfigError("add_row: bias " + bias.value().shape_str() + " does not fit " + a.value().shape_str());
    }
    Tensor out = a.value();
    for (int r = 0; r < out.rows; ++r) {
        auto row = out.row(r);
        for (int c = 0; c < out.cols; ++c) row[c] += bias.value().data[c];
    }
    return make_op(std::move(out), {a, bias}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad) axpy(1.0, self.grad, na.grad_buffer());
        if (nb.requires_grad) {
            Tensor& gb = nb.grad_buffer();
            for (int r = 0; r < self.grad.rows; ++r) {
                auto row = self.grad.row(r);
                for (int c = 0; c < self.grad.cols; ++c) gb.data[c] += row[c];
            }
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) { return add_row(matmul(x, weight), bias); }

Var add_n(const std::vector<Var>& terms) {
    if (terms.empty()) throw ConfigError("add_n: no terms");
    Tensor out = terms.front().value();
    for (std::size_t i = 1; i < terms.size(); ++i) {
        require_same_shape(out, terms[i].value(), "add_n");
        axpy(1.0, terms[i].value(), out);
    }
    return make_op(std::move(out), terms, [](Node& self) {
        for (auto& n : self.inputs)
            if (n->requires_grad) axpy(1.0, self.grad, n->grad_buffer());
    });
}

Var gelu(const Var& a) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = gelu_value(a.value().data[i]);
    return make_op(std::move(out), {a}, [](Node& self) {
        Node& na = in(self, 0);
        Tensor& g = na.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * gelu_grad(na.value.data[i]);
    });
}

Var softplus(const Var& a) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = softplus_value(a.value().data[i]);
    return make_op(std::move(out), {a}, [](Node& self) {
        Node& na = in(self, 0);
        Tensor& g = na.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[i] * sigmoid_value(na.value.data[i]);
    });
}

Var softmax_rows(const Var& a) {
    Tensor out(a.rows(), a.cols());
    for (int r = 0; r < a.rows(); ++r) {
        auto x = a.value().row(r);
        auto y = out.row(r);
        const double m = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (int c = 0; c < a.cols(); ++c) z += (y[c] = std::exp(x[c] - m));
        for (int c = 0; c < a.cols(); ++c) y[c] /= z;
    }
    return make_op(std::move(out), {a}, [](Node& self) {
        Tensor& g = in(self, 0).grad_buffer();
        for (int r = 0; r < self.value.rows; ++r) {
            auto y = self.value.row(r);
            auto gy = self.grad.row(r);
            double s = 0.0;
            for (int c = 0; c < self.value.cols; ++c) s += gy[c] * y[c];
            auto gx = g.row(r);
            for (int c = 0; c < self.value.cols; ++c) gx[c] += y[c] * (gy[c] - s);
        }
    });
}

Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps) {
    const int n = a.rows();
    const int d = a.cols();
    if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
        throw ConfigError("layer_norm: affine parameters must be 1x" + std::to_string(d));
    }
    Tensor out(n, d);
    Tensor xhat(n, d);
    std::vector<double> inv_std(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) {
        auto x = a.value().row(r);
        double mu = 0.0;
        for (double v : x) mu += v;
        mu /= d;
        double var = 0.0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int c = 0; c < d; ++c) {
            xhat(r, c) = (x[c] - mu) * is;
            out(r, c) = xhat(r, c) * gamma.value().data[c] + beta.value().data[c];
        }
    }
    return make_op(std::move(out), {a, gamma, beta},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       Node& na = in(self, 0);
                       Node& ng = in(self, 1);
                       Node& nb = in(self, 2);
                       const int rows = self.grad.rows;
                       const int d = self.grad.cols;
                       if (ng.requires_grad || nb.requires_grad) {
                           Tensor& gg = ng.grad_buffer();
                           Tensor& gb = nb.grad_buffer();
                           for (int r = 0; r < rows; ++r)
                               for (int c = 0; c < d; ++c) {
                                   gg.data[c] += self.grad(r, c) * xhat(r, c);
                                   gb.data[c] += self.grad(r, c);
                               }
                       }
                       if (na.requires_grad) {
                           Tensor& gx = na.grad_buffer();
                           std::vector<double> gh(static_cast<std::size_t>(d));
                           for (int r = 0; r < rows; ++r) {
                               double mean_gh = 0.0, mean_ghx = 0.0;
                               for (int c = 0; c < d; ++c) {
                                   gh[c] = self.grad(r, c) * ng.value.data[c];
                                   mean_gh += gh[c];
                                   mean_ghx += gh[c] * xhat(r, c);
                               }
                               mean_gh /= d;
                               mean_ghx /= d;
                               for (int c = 0; c < d; ++c) {
                                   gx(r, c) += inv_std[r] * (gh[c] - mean_gh - xhat(r, c) * mean_ghx);
                               }
                           }
                       }
                   });
}

Var slice_cols(const Var& a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ConfigError("slice_cols: out of range");
    Tensor out(a.rows(), count);
    for (int r = 0; r < a.rows(); ++r)
        std::copy_n(a.value().row(r).data() + start, count, out.row(r).data());
    return make_op(std::move(out), {a}, [start, count](Node& self) {
        Tensor& g = in(self, 0).grad_buffer();
        for (int r = 0; r < self.grad.rows; ++r)
            for (int c = 0; c < count; ++c) g(r, start + c) += self.grad(r, c);
    });
}

Var slice_rows(const Var& a, int start, int count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw ConfigError("slice_rows: out of range");
    Tensor out(count, a.cols());
    std::copy_n(a.value().data.data() + static_cast<std::size_t>(start) * a.cols(), out.size(), out.data.data());
    return make_op(std::move(out), {a}, [start](Node& self) {
        Tensor& g = in(self, 0).grad_buffer();
        const std::size_t off = static_cast<std::size_t>(start) * g.cols;
        for (std::size_t i = 0; i < self.grad.size(); ++i) g.data[off + i] += self.grad.data[i];
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_cols: no parts");
    const int rows = parts.front().rows();
    int cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ConfigError("concat_cols: row mismatch");
        cols += p.cols();
    }
    Tensor out(rows, cols);
    int off = 0;
    for (const auto& p : parts) {
        for (int r = 0; r < rows; ++r) std::copy_n(p.value().row(r).data(), p.cols(), out.row(r).data() + off);
        off += p.cols();
    }
    return make_op(std::move(out), parts, [](Node& self) {
        int off = 0;
        for (auto& p : self.inputs) {
            const int pc = p->value.cols;
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (int r = 0; r < g.rows; ++r)
                    for (int c = 0; c < pc; ++c) g(r, c) += self.grad(r, off + c);
            }
            off += pc;
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ConfigError("concat_rows: no parts");
    const int cols = parts.front().cols();
    int rows = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) throw ConfigError("concat_rows: column mismatch");
        rows += p.rows();
    }
    Tensor out(rows, cols);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.value().data.begin(), p.value().data.end(), out.data.begin() + static_cast<long>(off));
        off += p.value().size();
    }
    return make_op(std::move(out), parts, [](Node& self) {
        std::size_t off = 0;
        for (auto& p : self.inputs) {
            if (p->requires_grad) {
                Tensor& g = p->grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += self.grad.data[off + i];
            }
            off += p->value.size();
        }
    });
}

Var mean_rows(const Var& a) {
    const int n = a.rows();
    if (n == 0) throw ConfigError("mean_rows: empty input");
    Tensor out(1, a.cols());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < a.cols(); ++c) out.data[c] += a.value()(r, c);
    for (double& v : out.data) v /= n;
    return make_op(std::move(out), {a}, [n](Node& self) {
        Tensor& g = in(self, 0).grad_buffer();
        for (int r = 0; r < g.rows; ++r)
            for (int c = 0; c < g.cols; ++c) g(r, c) += self.grad.data[c] / n;
    });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data) s += v;
    return make_op(Tensor(1, 1, s), {a}, [](Node& self) {
        Tensor& g = in(self, 0).grad_buffer();
        const double gs = self.grad.data[0];
        for (double& v : g.data) v += gs;
    });
}

Var mean(const Var& a) {
    if (a.value().size() == 0) throw ConfigError("mean: empty input");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var resample(const Var& a, std::shared_ptr<const Resampler> resampler) {
    Tensor out = resampler->apply(a.value());
    return make_op(std::move(out), {a}, [resampler](Node& self) {
        resampler->apply_transpose_acc(self.grad, in(self, 0).grad_buffer());
    });
}

namespace {

Tensor im2col3x3(const Tensor& x, Grid grid) {
    const int cin = x.cols;
    Tensor cols(grid.count(), 9 * cin);
    for (int y = 0; y < grid.h; ++y)
        for (int xx = 0; xx < grid.w; ++xx) {
            double* dst = cols.row(y * grid.w + xx).data();
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const int sy = y + ky - 1;
                    const int sx = xx + kx - 1;
                    if (sy < 0 || sy >= grid.h || sx < 0 || sx >= grid.w) continue;
                    std::copy_n(x.row(sy * grid.w + sx).data(), cin, dst + (ky * 3 + kx) * cin);
                }
        }
    return cols;
}

void col2im3x3_acc(const Tensor& cols, Grid grid, Tensor& gx) {
    const int cin = gx.cols;
    for (int y = 0; y < grid.h; ++y)
        for (int xx = 0; xx < grid.w; ++xx) {
            const double* src = cols.row(y * grid.w + xx).data();
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const int sy = y + ky - 1;
                    const int sx = xx + kx - 1;
                    if (sy < 0 || sy >= grid.h || sx < 0 || sx >= grid.w) continue;
                    double* dst = gx.row(sy * grid.w + sx).data();
                    const double* s = src + (ky * 3 + kx) * cin;
                    for (int c = 0; c < cin; ++c) dst[c] += s[c];
                }
        }
}

}  // namespace

Var conv3x3(const Var& a, Grid grid, const Var& weight, const Var& bias) {
    if (a.rows() != grid.count()) throw ConfigError("conv3x3: input rows do not match grid");
    if (weight.rows() != 9 * a.cols()) {
        throw ConfigError("conv3x3: weight " + weight.value().shape_str() + " does not fit " +
                          std::to_string(a.cols()) + " input channels");
    }
    if (bias.rows() != 1 || bias.cols() != weight.cols()) throw ConfigError("conv3x3: bias shape");
    auto cols = std::make_shared<Tensor>(im2col3x3(a.value(), grid));
    Tensor out = mtd::matmul(*cols, weight.value());
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c) out(r, c) += bias.value().data[c];
    return make_op(std::move(out), {a, weight, bias}, [cols, grid](Node& self) {
        Node& na = in(self, 0);
        Node& nw = in(self, 1);
        Node& nb = in(self, 2);
        if (nw.requires_grad) matmul_tn_acc(*cols, self.grad, nw.grad_buffer());
        if (nb.requires_grad) {
            Tensor& gb = nb.grad_buffer();
            for (int r = 0; r < self.grad.rows; ++r)
                for (int c = 0; c < self.grad.cols; ++c) gb.data[c] += self.grad(r, c);
        }
        if (na.requires_grad) {
            Tensor gcols(cols->rows, cols->cols);
            matmul_nt_acc(self.grad, nw.value, gcols);
            col2im3x3_acc(gcols, grid, na.grad_buffer());
        }
    });
}

Var weighted_sum(const Var& gates, const std::vector<Var>& experts) {
    if (gates.rows() != 1 || static_cast<std::size_t>(gates.cols()) != experts.size() || experts.empty()) {
        throw ConfigError("weighted_sum: " + std::to_string(experts.size()) + " experts for gate vector " +
                          gates.value().shape_str());
    }
    Tensor out(experts.front().rows(), experts.front().cols());
    for (std::size_t k = 0; k < experts.size(); ++k) {
        require_same_shape(out, experts[k].value(), "weighted_sum");
        axpy(gates.value().data[k], experts[k].value(), out);
    }
    std::vector<Var> inputs{gates};
    inputs.insert(inputs.end(), experts.begin(), experts.end());
    return make_op(std::move(out), std::move(inputs), [](Node& self) {
        Node& ng = *self.inputs[0];
        const auto& k = kernels::active();
        for (std::size_t e = 1; e < self.inputs.size(); ++e) {
            Node& ne = *self.inputs[e];
            if (ne.requires_grad) axpy(ng.value.data[e - 1], self.grad, ne.grad_buffer());
            if (ng.requires_grad) {
                ng.grad_buffer().data[e - 1] += k.dot(self.grad.size(), self.grad.data.data(), ne.value.data.data());
            }
        }
    });
}

Var cosine_distance(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "cosine_distance");
    const int n = a.rows();
    if (n == 0) throw ConfigError("cosine_distance: no tokens");
    const auto& k = kernels::active();
    const std::size_t d = static_cast<std::size_t>(a.cols());
    std::vector<double> na(n), nb(n), cs(n);
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const double* x = a.value().row(r).data();
        const double* y = b.value().row(r).data();
        na[r] = std::sqrt(k.dot(d, x, x));
        nb[r] = std::sqrt(k.dot(d, y, y));
        if (na[r] == 0.0 || nb[r] == 0.0) {
            throw NumericError("cosine_distance: zero-norm token at index " + std::to_string(r));
        }
        cs[r] = k.dot(d, x, y) / (na[r] * nb[r]);
        total += 1.0 - cs[r];
    }
    return make_op(Tensor(1, 1, total / n), {a, b},
                   [na = std::move(na), nb = std::move(nb), cs = std::move(cs), n](Node& self) {
                       const double g = self.grad.data[0] / n;
                       for (int side = 0; side < 2; ++side) {
                           Node& me = in(self, side);
                           if (!me.requires_grad) continue;
                           Node& other = in(self, 1 - side);
                           const auto& mn = side == 0 ? na : nb;
                           const auto& on = side == 0 ? nb : na;
                           Tensor& gm = me.grad_buffer();
                           for (int r = 0; r < n; ++r) {
                               // d(1 - cos)/dx = -(y / (|x||y|) - cos * x / |x|^2)
                               const double inv = 1.0 / (mn[r] * on[r]);
                               const double c2 = cs[r] / (mn[r] * mn[r]);
                               auto x = me.value.row(r);
                               auto y = other.value.row(r);
                               auto gx = gm.row(r);
                               for (std::size_t c = 0; c < x.size(); ++c) gx[c] -= g * (y[c] * inv - c2 * x[c]);
                           }
                       }
                   });
}

Var smooth_l1(const Var& a, const Var& b, double delta) {
    require_same_shape(a.value(), b.value(), "smooth_l1");
    if (!(delta > 0.0)) throw ConfigError("smooth_l1: delta must be positive");
    const std::size_t count = a.value().size();
    if (count == 0) throw ConfigError("smooth_l1: empty input");
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double x = a.value().data[i] - b.value().data[i];
        const double ax = std::abs(x);
        total += ax < delta ? 0.5 * x * x / delta : ax - 0.5 * delta;
    }
    return make_op(Tensor(1, 1, total / static_cast<double>(count)), {a, b}, [delta, count](Node& self) {
        const double g = self.grad.data[0] / static_cast<double>(count);
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        for (std::size_t i = 0; i < count; ++i) {
            const double x = na.value.data[i] - nb.value.data[i];
            const double dx = std::abs(x) < delta ? x / delta : (x > 0 ? 1.0 : -1.0);
            if (na.requires_grad) na.grad_buffer().data[i] += g * dx;
            if (nb.requires_grad) nb.grad_buffer().data[i] -= g * dx;
        }
    });
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels, int ignore_label) {
    const int n = logits.rows();
    const int kcls = logits.cols();
    if (static_cast<int>(labels.size()) != n) throw ConfigError("softmax_cross_entropy: label count mismatch");
    Tensor probs(n, kcls);
    double total = 0.0;
    int valid = 0;
    for (int r = 0; r < n; ++r) {
        auto x = logits.value().row(r);
        auto p = probs.row(r);
        const double m = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (int c = 0; c < kcls; ++c) z += (p[c] = std::exp(x[c] - m));
        for (int c = 0; c < kcls; ++c) p[c] /= z;
        if (labels[r] == ignore_label) continue;
        if (labels[r] < 0 || labels[r] >= kcls) {
            throw ConfigError("softmax_cross_entropy: label " + std::to_string(labels[r]) + " out of range");
        }
        total += (m + std::log(z)) - x[labels[r]];
        ++valid;
    }
    if (valid == 0) throw NumericError("softmax_cross_entropy: every pixel is ignored");
    return make_op(Tensor(1, 1, total / valid), {logits},
                   [probs = std::move(probs), labels, ignore_label, valid](Node& self) {
                       Tensor& g = in(self, 0).grad_buffer();
                       const double gs = self.grad.data[0] / valid;
                       for (int r = 0; r < probs.rows; ++r) {
                           if (labels[r] == ignore_label) continue;
                           auto p = probs.row(r);
                           auto gr = g.row(r);
                           for (int c = 0; c < probs.cols; ++c) gr[c] += gs * (p[c] - (c == labels[r] ? 1.0 : 0.0));
                       }
                   });
}

Var weighted_bce_with_logits(const Var& logits, const std::vector<double>& targets,
                             const std::vector<double>& weights, const std::vector<char>& valid) {
    const std::size_t n = static_cast<std::size_t>(logits.rows());
    if (logits.cols() != 1 || targets.size() != n || weights.size() != n || valid.size() != n) {
        throw ConfigError("weighted_bce_with_logits: expected one logit column and per-row targets");
    }
    double total = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!valid[i]) continue;
        const double x = logits.value().data[i];
        // -[y log s(x) + (1-y) log(1-s(x))] = softplus(x) - y x
        total += weights[i] * (softplus_value(x) - targets[i] * x);
        ++count;
    }
    if (count == 0) throw NumericError("weighted_bce_with_logits: every pixel is ignored");
    return make_op(Tensor(1, 1, total / count), {logits}, [targets, weights, valid, count](Node& self) {
        Tensor& g = in(self, 0).grad_buffer();
        const double gs = self.grad.data[0] / count;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            if (!valid[i]) continue;
            g.data[i] += gs * weights[i] * (sigmoid_value(in(self, 0).value.data[i]) - targets[i]);
        }
    });
}

Var masked_l1(const Var& pred, const Tensor& target, const std::vector<char>& valid) {
    require_same_shape(pred.value(), target, "masked_l1");
    if (valid.size() != static_cast<std::size_t>(pred.rows())) throw ConfigError("masked_l1: mask size mismatch");
    double total = 0.0;
    int rows = 0;
    for (int r = 0; r < pred.rows(); ++r) {
        if (!valid[r]) continue;
        ++rows;
        for (int c = 0; c < pred.cols(); ++c) total += std::abs(pred.value()(r, c) - target(r, c));
    }
    if (rows == 0) throw NumericError("masked_l1: every pixel is ignored");
    const double denom = static_cast<double>(rows) * pred.cols();
    return make_op(Tensor(1, 1, total / denom), {pred}, [target, valid, denom](Node& self) {
        Node& np = in(self, 0);
        Tensor& g = np.grad_buffer();
        const double gs = self.grad.data[0] / denom;
        for (int r = 0; r < g.rows; ++r) {
            if (!valid[r]) continue;
            for (int c = 0; c < g.cols; ++c) {
                const double x = np.value(r, c) - target(r, c);
                g(r, c) += gs * (x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0));
            }
        }
    });
}

}  // namespace ag
}  // namespace mtd
