/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/errors.hpp"
#include "lightslab/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace lightslab;
using lightslab::testing::Gen;

namespace {

    // Direct windowed SSIM in long double with two-pass moments per window.
    double ssim_oracle(const ImageBuffer& a, const ImageBuffer& b) {
        long double g[11];
        long double gs = 0;
        for (int i = 0; i < 11; ++i) {
            g[i] = std::exp(-static_cast<long double>((i - 5) * (i - 5)) / 4.5L);
            gs += g[i];
        }
        const long double c1 = 1e-4L;
        const long double c2 = 9e-4L;
        long double total = 0;
        long count = 0;
        for (int c = 0; c < 3; ++c)
            for (int y0 = 0; y0 + 11 <= a.height; ++y0)
                for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
                    long double ma = 0, mb = 0;
                    for (int dy = 0; dy < 11; ++dy)
                        for (int dx = 0; dx < 11; ++dx) {
                            const long double w = g[dy] * g[dx] / (gs * gs);
                            ma += w * a.at(y0 + dy, x0 + dx, c);
                            mb += w * b.at(y0 + dy, x0 + dx, c);
                        }
                    long double va = 0, vb = 0, cov = 0;
                    for (int dy = 0; dy < 11; ++dy)
                        for (int dx = 0; dx < 11; ++dx) {
                            const long double w = g[dy] * g[dx] / (gs * gs);
                            const long double da = a.at(y0 + dy, x0 + dx, c) - ma;
                            const long double db = b.at(y0 + dy, x0 + dx, c) - mb;
                            va += w * da * da;
                            vb += w * db * db;
                            cov += w * da * db;
                        }
                    total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++count;
                }
        return static_cast<double>(total / count);
    }

    ImageBuffer random_image(Gen& gen, int w, int h) {
        ImageBuffer img(w, h);
        for (auto& v : img.values)
            v = gen.uniform();
        return img;
    }

    ImageBuffer add_noise(Gen& gen, const ImageBuffer& img, double sigma) {
        ImageBuffer out = img;
        for (auto& v : out.values)
            v = std::clamp(v + sigma * gen.normal(), 0.0, 1.0);
        return out;
    }

} // namespace

TEST_SUITE("metrics") {

    TEST_CASE("PSNR examples") {
        const ImageBuffer a(4, 4, 0.5);
        CHECK(psnr(a, a) == kPsnrCap);
        CHECK(kPsnrCap == 100.0);
        CHECK(psnr(a, ImageBuffer(4, 4, 0.6)) == doctest::Approx(20.0));
        CHECK(psnr(ImageBuffer(2, 2, 0.0), ImageBuffer(2, 2, 1.0)) == doctest::Approx(0.0));
        CHECK(psnr_from_mse(1e-3) == doctest::Approx(30.0));
        CHECK(psnr_from_mse(1e-12) == kPsnrCap);
        CHECK(psnr_from_mse(0.0) == kPsnrCap);

        ImageBuffer one_off(2, 1, 0.0);
        one_off.values[0] = 1.0;
        CHECK(mean_squared_error(one_off, ImageBuffer(2, 1, 0.0)) == doctest::Approx(1.0 / 6.0));
    }

    TEST_CASE("metric argument errors") {
        CHECK_THROWS_AS(psnr(ImageBuffer(2, 2), ImageBuffer(2, 3)), InvalidArgument);
        CHECK_THROWS_AS(psnr(ImageBuffer(), ImageBuffer()), InvalidArgument);
        CHECK_THROWS_AS(ssim(ImageBuffer(10, 20), ImageBuffer(10, 20)), InvalidArgument);
        CHECK_THROWS_AS(ssim(ImageBuffer(12, 12), ImageBuffer(12, 11)), InvalidArgument);
    }

    TEST_CASE("SSIM examples") {
        Gen gen(401);
        const ImageBuffer img = random_image(gen, 16, 16);
        CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
        const double c1 = 1e-4;
        CHECK(ssim(ImageBuffer(11, 11, 0.0), ImageBuffer(11, 11, 1.0)) == doctest::Approx(c1 / (1 + c1)));
        CHECK(ssim(ImageBuffer(13, 12, 0.3), ImageBuffer(13, 12, 0.3)) == doctest::Approx(1.0));
    }

    TEST_CASE("property: SSIM agrees with a direct windowed oracle") {
        Gen gen(409);
        for (int trial = 0; trial < 10; ++trial) {
            const int w = gen.integer(11, 18);
            const int h = gen.integer(11, 18);
            const ImageBuffer a = random_image(gen, w, h);
            const ImageBuffer b = gen.coin() ? random_image(gen, w, h) : add_noise(gen, a, gen.uniform(0.01, 0.3));
            CHECK(ssim(a, b) == doctest::Approx(ssim_oracle(a, b)).epsilon(1e-9));
        }
    }

    TEST_CASE("property: SSIM is symmetric, bounded and falls with noise") {
        Gen gen(419);
        for (int trial = 0; trial < 10; ++trial) {
            ImageBuffer base(24, 24);
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x < 24; ++x)
                    for (int c = 0; c < 3; ++c)
                        base.at(y, x, c) = 0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + c + trial);
            const ImageBuffer light = add_noise(gen, base, 1e-4);
            const ImageBuffer mid = add_noise(gen, base, 0.05);
            const ImageBuffer heavy = add_noise(gen, base, 0.2);
            CHECK(ssim(base, light) >= 0.999);
            CHECK(ssim(base, mid) == doctest::Approx(ssim(mid, base)).epsilon(1e-12));
            CHECK(ssim(base, light) > ssim(base, mid));
            CHECK(ssim(base, mid) > ssim(base, heavy));
            CHECK(ssim(base, heavy) <= 1.0);
            CHECK(ssim(base, heavy) >= -1.0);
            CHECK(psnr(base, light) > psnr(base, mid));
        }
    }

    TEST_CASE("evaluate reports both metrics") {
        Gen gen(421);
        const ImageBuffer a = random_image(gen, 12, 12);
        const ImageBuffer b = add_noise(gen, a, 0.1);
        const MetricReport r = evaluate(b, a);
        CHECK(r.psnr == psnr(b, a));
        CHECK(r.ssim == ssim(b, a));
    }
}
