// Copyright 2026 The mtdistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "mtd/tensor.hpp"

#include <vector>

namespace mtd {

/// Planar C x H x W image.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Image() = default;
    Image(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }

    bool operator==(const Image&) const = default;
};

/// Non-overlapping p x p patches flattened to rows of length C*p*p,
/// ordered (c, py, px). Rows follow the patch grid in raster order.
Tensor extract_patches(const Image& image, int patch_h, int patch_w);

}  // namespace mtd
