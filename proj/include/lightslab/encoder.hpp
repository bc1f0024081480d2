/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/geometry.hpp"
#include "lightslab/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace lightslab {

    struct EncoderConfig {
        int levels = 16;
        int feature_dim = 4;
        int min_resolution = 16;
        int max_resolution = 256;

        void validate() const;
        // 6 * L * F
        int channels() const { return 6 * levels * feature_dim; }

        bool operator==(const EncoderConfig&) const = default;
    };

    // The six 2D sub-spaces of (x, y, u, v), in concatenation order.
    inline constexpr std::array<std::pair<int, int>, 6> kAxisPairs{
        {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
    inline constexpr std::array<const char*, 6> kAxisPairNames{"xy", "xu", "xv", "yu", "yv", "uv"};

    // Nodes per axis for each level, growing geometrically from N_min to N_max.
    std::vector<int> level_resolutions(const EncoderConfig& config);

    /**
     * Six multi-resolution 2D feature grids over the unit ray cube.
     *
     * Storage is one flat float buffer, level-major, then axis pair, then an
     * N_l x N_l x F grid indexed [first axis][second axis][feature].
     */
    class FeatureGridPyramid {
    public:
        FeatureGridPyramid() = default;
        explicit FeatureGridPyramid(const EncoderConfig& config);

        const EncoderConfig& config() const { return config_; }
        const std::vector<int>& resolutions() const { return resolutions_; }
        int feature_dim() const { return config_.feature_dim; }
        std::size_t parameter_count() const { return values_.size(); }

        std::span<float> values() { return values_; }
        std::span<const float> values() const { return values_; }

        std::size_t grid_offset(int level, int pair) const;
        std::size_t node_offset(int level, int pair, int i, int j) const;

        bool operator==(const FeatureGridPyramid&) const = default;

    private:
        EncoderConfig config_;
        std::vector<int> resolutions_;
        std::vector<std::size_t> level_offsets_;
        std::vector<float> values_;
    };

    // Uniform(-1e-4, 1e-4) from a PRNG seeded by `seed`.
    FeatureGridPyramid init_pyramid(const EncoderConfig& config, std::uint64_t seed);

    /// The four nodes and weights of a bilinear lookup on an N x N grid.
    struct BilinearTap {
        std::array<int, 4> i{};
        std::array<int, 4> j{};
        std::array<double, 4> weight{};
    };
    // a, b in [0, 1]; index mapping a * (N - 1) so 0 and 1 land on boundary nodes.
    BilinearTap bilinear_tap(double a, double b, int resolution);

    // 6LF features, level-major, pair order xy, xu, xv, yu, yv, uv, feature innermost.
    std::vector<double> encode_ray(const FeatureGridPyramid& pyramid, const Ray4& r_unit);
    void encode_ray_into(const FeatureGridPyramid& pyramid, const Ray4& r_unit, std::span<double> out);

    // (1, h_l, w_l, 6LF) feature map for a normalized bundle.
    FeatureMap encode_bundle(const FeatureGridPyramid& pyramid, const RayBundle& bundle);
    // Stacks several equally-sized bundles into an (n, h_l, w_l, 6LF) batch.
    FeatureMap encode_bundles(const FeatureGridPyramid& pyramid, std::span<const RayBundle> bundles);

    // Adjoint of encode_bundle: gradient with the same layout as pyramid.values().
    std::vector<double> encoder_backward(const FeatureGridPyramid& pyramid, const RayBundle& bundle,
                                         const FeatureMap& upstream_grad);
    // Adds the contribution of batch item `batch_index` of `upstream_grad` into `grad`.
    void accumulate_encoder_gradient(const FeatureGridPyramid& pyramid, const RayBundle& bundle,
                                     const FeatureMap& upstream_grad, int batch_index, std::span<double> grad);

    // Raw coordinates followed by (sin, cos)(2^k * pi * c) for k < num_freqs, per coordinate.
    std::vector<double> frequency_encode(const Ray4& r, int num_freqs);
    inline int frequency_channels(int num_freqs) { return 4 + 8 * num_freqs; }
    FeatureMap frequency_encode_bundles(std::span<const RayBundle> bundles, int num_freqs);

} // namespace lightslab
