/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/image.hpp"

namespace lightslab {

    inline constexpr double kPsnrCap = 100.0;

    struct MetricReport {
        double psnr = 0.0;
        double ssim = 0.0;
    };

    double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b);

    // 10 log10(1 / mse) for unit-range images; zero error returns kPsnrCap.
    double psnr_from_mse(double mse);
    double psnr(const ImageBuffer& a, const ImageBuffer& b);

    // Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
    // dynamic range 1, mean over the valid region and the three channels.
    double ssim(const ImageBuffer& a, const ImageBuffer& b);

    MetricReport evaluate(const ImageBuffer& rendered, const ImageBuffer& reference);

} // namespace lightslab
