/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/metrics.hpp"
#include "lightslab/errors.hpp"

#include <array>
#include <cmath>

namespace lightslab {

    namespace {

        constexpr int kWindow = 11;
        constexpr double kSigma = 1.5;
        constexpr double kC1 = 0.01 * 0.01;
        constexpr double kC2 = 0.03 * 0.03;

        std::array<double, kWindow> gaussian_window() {
            std::array<double, kWindow> w{};
            double sum = 0.0;
            for (int i = 0; i < kWindow; ++i) {
                const double d = i - kWindow / 2;
                w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
                sum += w[static_cast<std::size_t>(i)];
            }
            for (auto& v : w)
                v /= sum;
            return w;
        }

        // Separable valid-mode filtering of one plane (h x w) -> (h-10) x (w-10).
        std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                         const std::array<double, kWindow>& k) {
            const int ow = w - kWindow + 1;
            const int oh = h - kWindow + 1;
            std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < ow; ++x) {
                    double s = 0.0;
                    for (int i = 0; i < kWindow; ++i)
                        s += k[static_cast<std::size_t>(i)] * plane[static_cast<std::size_t>(y) * w + x + i];
                    rows[static_cast<std::size_t>(y) * ow + x] = s;
                }
            std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double s = 0.0;
                    for (int i = 0; i < kWindow; ++i)
                        s += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
                    out[static_cast<std::size_t>(y) * ow + x] = s;
                }
            return out;
        }

        void check_shapes(const ImageBuffer& a, const ImageBuffer& b, const char* op) {
            if (!a.same_shape(b) || a.values.size() != b.values.size())
                throw InvalidArgument(std::string(op) + ": image shapes differ");
            if (a.values.empty())
                throw InvalidArgument(std::string(op) + ": empty image");
        }

    } // namespace

    double mean_squared_error(const ImageBuffer& a, const ImageBuffer& b) {
        check_shapes(a, b, "mse");
        double sum = 0.0;
        for (std::size_t i = 0; i < a.values.size(); ++i) {
            const double d = a.values[i] - b.values[i];
            sum += d * d;
        }
        return sum / static_cast<double>(a.values.size());
    }

    double psnr_from_mse(double mse) {
        if (mse <= 0.0)
            return kPsnrCap;
        return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
    }

    double psnr(const ImageBuffer& a, const ImageBuffer& b) { return psnr_from_mse(mean_squared_error(a, b)); }

    double ssim(const ImageBuffer& a, const ImageBuffer& b) {
        check_shapes(a, b, "ssim");
        if (a.width < kWindow || a.height < kWindow)
            throw InvalidArgument("ssim: image smaller than the 11x11 window");

        const auto k = gaussian_window();
        const int h = a.height;
        const int w = a.width;
        const std::size_t n = static_cast<std::size_t>(h) * w;

        double total = 0.0;
        std::size_t count = 0;
        for (int c = 0; c < 3; ++c) {
            std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
            for (std::size_t i = 0; i < n; ++i) {
                pa[i] = a.values[i * 3 + static_cast<std::size_t>(c)];
                pb[i] = b.values[i * 3 + static_cast<std::size_t>(c)];
                paa[i] = pa[i] * pa[i];
                pbb[i] = pb[i] * pb[i];
                pab[i] = pa[i] * pb[i];
            }
            const auto mu_a = filter_valid(pa, h, w, k);
            const auto mu_b = filter_valid(pb, h, w, k);
            const auto e_aa = filter_valid(paa, h, w, k);
            const auto e_bb = filter_valid(pbb, h, w, k);
            const auto e_ab = filter_valid(pab, h, w, k);
            for (std::size_t i = 0; i < mu_a.size(); ++i) {
                const double ma = mu_a[i];
                const double mb = mu_b[i];
                const double var_a = e_aa[i] - ma * ma;
                const double var_b = e_bb[i] - mb * mb;
                const double cov = e_ab[i] - ma * mb;
                total += ((2.0 * ma * mb + kC1) * (2.0 * cov + kC2)) /
                         ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
            }
            count += mu_a.size();
        }
        return total / static_cast<double>(count);
    }

    MetricReport evaluate(const ImageBuffer& rendered, const ImageBuffer& reference) {
        return {psnr(rendered, reference), ssim(rendered, reference)};
    }

} // namespace lightslab
