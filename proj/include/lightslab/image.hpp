/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lightslab {

    /// Interleaved RGB image with values in [0, 1], row-major from the top-left.
    struct ImageBuffer {
        int width = 0;
        int height = 0;
        std::vector<double> values; // width * height * 3

        ImageBuffer() = default;
        ImageBuffer(int w, int h, double fill = 0.0)
            : width(w), height(h), values(static_cast<std::size_t>(w) * h * 3, fill) {}

        static constexpr int channels = 3;

        double& at(int y, int x, int c) { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
        double at(int y, int x, int c) const { return values[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

        bool same_shape(const ImageBuffer& o) const { return width == o.width && height == o.height; }
        bool operator==(const ImageBuffer&) const = default;
    };

    // Batch item `index` of an (n, h, w, 3) map.
    ImageBuffer image_from_map(const FeatureMap& map, int index = 0);
    // Stacks equally-sized images into an (n, h, w, 3) map.
    FeatureMap map_from_images(std::span<const ImageBuffer> images);

    // Round each value to the nearest multiple of 1/255.
    ImageBuffer quantize_8bit(const ImageBuffer& image);

    // PNG codec: 8/16-bit gray, gray+alpha, RGB, RGBA or palette input; alpha is
    // composited over white. Output is 8-bit RGB.
    ImageBuffer load_image(const std::filesystem::path& path);
    void save_image(const ImageBuffer& image, const std::filesystem::path& path);
    ImageBuffer decode_png(std::span<const std::uint8_t> bytes);
    std::vector<std::uint8_t> encode_png(const ImageBuffer& image);

    // Writes an 8 or 16-bit PNG from raw samples; used to produce fixtures in any layout.
    // `color_type` is a libpng PNG_COLOR_TYPE_* constant.
    std::vector<std::uint8_t> encode_png_raw(int width, int height, int color_type, int bit_depth,
                                             std::span<const std::uint16_t> samples);

} // namespace lightslab
