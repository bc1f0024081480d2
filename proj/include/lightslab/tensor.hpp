/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace lightslab {

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatrixView = Eigen::Map<RowMatrix>;
    using ConstMatrixView = Eigen::Map<const RowMatrix>;

    /// Dense NHWC activation tensor in double precision.
    struct FeatureMap {
        int n = 0;
        int h = 0;
        int w = 0;
        int c = 0;
        std::vector<double> data;

        FeatureMap() = default;
        FeatureMap(int n_, int h_, int w_, int c_)
            : n(n_), h(h_), w(w_), c(c_), data(static_cast<std::size_t>(n_) * h_ * w_ * c_, 0.0) {}

        std::size_t pixels() const { return static_cast<std::size_t>(n) * h * w; }
        std::size_t index(int b, int y, int x, int ch) const {
            return ((static_cast<std::size_t>(b) * h + y) * w + x) * c + ch;
        }
        double& at(int b, int y, int x, int ch) { return data[index(b, y, x, ch)]; }
        double at(int b, int y, int x, int ch) const { return data[index(b, y, x, ch)]; }

        bool same_shape(const FeatureMap& o) const { return n == o.n && h == o.h && w == o.w && c == o.c; }

        // (pixels x channels) view for point-wise ops.
        MatrixView matrix() { return {data.data(), static_cast<Eigen::Index>(pixels()), c}; }
        ConstMatrixView matrix() const { return {data.data(), static_cast<Eigen::Index>(pixels()), c}; }
    };

} // namespace lightslab
