/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/decoder.hpp"
#include "lightslab/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace lightslab;
using lightslab::testing::Gen;

namespace {

    // Direct scatter form of a fractionally-strided convolution: every input
    // element stamps the kernel onto the output at stride spacing.
    FeatureMap scatter_tconv(const FeatureMap& in, const std::vector<float>& w, int cout, int k, int s, int pad) {
        FeatureMap out(in.n, in.h * s, in.w * s, cout);
        for (int b = 0; b < in.n; ++b)
            for (int iy = 0; iy < in.h; ++iy)
                for (int ix = 0; ix < in.w; ++ix)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int oy = iy * s - pad + ky;
                            const int ox = ix * s - pad + kx;
                            if (oy < 0 || ox < 0 || oy >= out.h || ox >= out.w)
                                continue;
                            for (int ci = 0; ci < in.c; ++ci)
                                for (int co = 0; co < cout; ++co)
                                    out.at(b, oy, ox, co) +=
                                        in.at(b, iy, ix, ci) *
                                        w[static_cast<std::size_t>(((ky * k + kx) * in.c + ci) * cout + co)];
                        }
        return out;
    }

    std::size_t conv_params(int in, int out, bool bias) { return static_cast<std::size_t>(in) * out + (bias ? out : 0); }
    std::size_t block_params(int c) { return 2 * conv_params(c, c, false) + 4u * c; }

    double dot(const FeatureMap& a, const FeatureMap& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.data.size(); ++i)
            s += a.data[i] * b.data[i];
        return s;
    }

    DecoderConfig tiny(int depth, int width, std::vector<SrStageConfig> sr = {}) {
        DecoderConfig c;
        c.depth = depth;
        c.width = width;
        c.sr_modules = std::move(sr);
        return c;
    }

} // namespace

TEST_SUITE("decoder") {

    TEST_CASE("parameter count by shape arithmetic") {
        const auto p = init_decoder(tiny(2, 4), 24, 1);
        const std::size_t expected = (24 * 4 + 4) + block_params(4) + (4 * 3 + 3);
        CHECK(p.parameter_count() == expected);
        CHECK(p.parameter_count() == 163);

        const auto q = init_decoder(tiny(4, 8, {{4, 2, 0}, {3, 3, 5}}), 10, 1);
        const std::size_t sr0 = 4 * 4 * 8 * 8 + 8 + 2 * block_params(8);
        const std::size_t sr1 = 3 * 3 * 8 * 5 + 5 + 2 * block_params(5);
        CHECK(q.parameter_count() == conv_params(10, 8, true) + 2 * block_params(8) + sr0 + sr1 + conv_params(5, 3, true));
        CHECK(q.buffers.size() == 2 * 4 * 8 + 2 * 4 * 8 + 2 * 4 * 5); // mean and variance per norm channel
    }

    TEST_CASE("initialization is seeded with the documented ranges") {
        const auto cfg = tiny(4, 6, {{4, 2, 0}});
        const auto a = init_decoder(cfg, 12, 7);
        const auto b = init_decoder(cfg, 12, 7);
        CHECK(a.params == b.params);
        CHECK(a.buffers == b.buffers);
        CHECK_FALSE(a.params == init_decoder(cfg, 12, 8).params);

        const float stem_bound = static_cast<float>(std::sqrt(1.0 / 12));
        for (std::size_t i = 0; i < 12 * 6; ++i)
            CHECK(std::abs(a.params.data()[a.stem().weight + i]) <= stem_bound);
        for (const auto& block : a.blocks())
            for (const NormLayer* n : {&block.norm1, &block.norm2})
                for (int c = 0; c < n->channels; ++c) {
                    CHECK(a.params.data()[n->scale + static_cast<std::size_t>(c)] == 1.0f);
                    CHECK(a.params.data()[n->shift + static_cast<std::size_t>(c)] == 0.0f);
                    CHECK(a.buffers.data()[n->running_mean + static_cast<std::size_t>(c)] == 0.0f);
                    CHECK(a.buffers.data()[n->running_var + static_cast<std::size_t>(c)] == 1.0f);
                }
    }

    TEST_CASE("config invariants") {
        CHECK_THROWS_AS(init_decoder(tiny(3, 4), 4, 1), InvalidConfig);
        CHECK_THROWS_AS(init_decoder(tiny(0, 4), 4, 1), InvalidConfig);
        CHECK_THROWS_AS(init_decoder(tiny(2, 0), 4, 1), InvalidConfig);
        CHECK_THROWS_AS(init_decoder(tiny(2, 4, {{4, 4, 0}}), 4, 1), InvalidConfig);
        CHECK_THROWS_AS(init_decoder(tiny(2, 4, {{5, 2, 0}}), 4, 1), InvalidConfig);
        CHECK_THROWS_AS(init_decoder(tiny(2, 4, {{4, 3, 0}}), 4, 1), InvalidConfig);
        CHECK_NOTHROW(init_decoder(tiny(2, 4, {{4, 2, 0}, {3, 3, 0}}), 4, 1));
    }

    TEST_CASE("transposed conv padding and output sizes") {
        CHECK(transposed_conv_padding(4, 2) == 1);
        CHECK(transposed_conv_padding(3, 3) == 0);
        CHECK_THROWS_AS(transposed_conv_padding(3, 2), InvalidConfig);
        for (auto [k, s] : {std::pair{4, 2}, std::pair{3, 3}}) {
            const int pad = transposed_conv_padding(k, s);
            for (int h = 1; h < 6; ++h)
                CHECK((h - 1) * s - 2 * pad + k == h * s);
        }
        const std::vector<float> w(3 * 3 * 1 * 1, 1.0f);
        const auto out = transposed_conv_forward(FeatureMap(1, 4, 4, 1), w, 1, 3, 3);
        CHECK(out.h == 12);
        CHECK(out.w == 12);
    }

    TEST_CASE("single input element stamps the kernel") {
        FeatureMap one(1, 1, 1, 1);
        one.data[0] = 1.0;
        const std::vector<float> ones(16, 1.0f);
        const auto out = transposed_conv_forward(one, ones, 1, 4, 2);
        REQUIRE(out.h == 2);
        REQUIRE(out.w == 2);
        const auto expected = scatter_tconv(one, ones, 1, 4, 2, 1);
        for (std::size_t i = 0; i < 4; ++i) {
            CHECK(out.data[i] == expected.data[i]);
            CHECK(out.data[i] == 1.0); // one kernel tap lands on each output pixel
        }
        // Distinct tap values show which taps land: output (y, x) takes tap (y + 1, x + 1).
        std::vector<float> taps(16);
        for (int i = 0; i < 16; ++i)
            taps[static_cast<std::size_t>(i)] = static_cast<float>(i);
        const auto t = transposed_conv_forward(one, taps, 1, 4, 2);
        CHECK(t.at(0, 0, 0, 0) == 5.0);
        CHECK(t.at(0, 0, 1, 0) == 6.0);
        CHECK(t.at(0, 1, 0, 0) == 9.0);
        CHECK(t.at(0, 1, 1, 0) == 10.0);
    }

    TEST_CASE("property: transposed conv matches the brute-force scatter") {
        Gen gen(71);
        for (int trial = 0; trial < 40; ++trial) {
            const bool x3 = gen.coin();
            const int k = x3 ? 3 : 4;
            const int s = x3 ? 3 : 2;
            const int cin = gen.integer(1, 4);
            const int cout = gen.integer(1, 4);
            const FeatureMap in = gen.feature_map(gen.integer(1, 2), gen.integer(1, 5), gen.integer(1, 5), cin);
            std::vector<float> w(static_cast<std::size_t>(k * k * cin * cout));
            for (auto& v : w)
                v = static_cast<float>(gen.normal());
            const auto got = transposed_conv_forward(in, w, cout, k, s);
            const auto want = scatter_tconv(in, w, cout, k, s, x3 ? 0 : 1);
            REQUIRE(got.same_shape(want));
            for (std::size_t i = 0; i < got.data.size(); ++i)
                CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
        }
        const std::vector<float> w(16 * 4, 0.5f);
        const auto zero = transposed_conv_forward(FeatureMap(1, 3, 2, 2), w, 2, 4, 2);
        for (double v : zero.data)
            CHECK(v == 0.0);
    }

    TEST_CASE("property: transposed conv backward is the adjoint") {
        Gen gen(73);
        for (int trial = 0; trial < 20; ++trial) {
            const bool x3 = gen.coin();
            const int k = x3 ? 3 : 4;
            const int s = x3 ? 3 : 2;
            const int cin = gen.integer(1, 3);
            const int cout = gen.integer(1, 3);
            FeatureMap in = gen.feature_map(1, gen.integer(1, 3), gen.integer(1, 3), cin);
            std::vector<float> w(static_cast<std::size_t>(k * k * cin * cout));
            for (auto& v : w)
                v = static_cast<float>(gen.normal());
            const FeatureMap up = gen.feature_map(1, in.h * s, in.w * s, cout);
            const auto g = transposed_conv_backward(in, w, cout, k, s, up);
            // Linear in the input: <T x, y> = <x, T^T y>.
            CHECK(dot(transposed_conv_forward(in, w, cout, k, s), up) == doctest::Approx(dot(in, g.input)).epsilon(1e-10));
            auto loss = [&] { return dot(transposed_conv_forward(in, w, cout, k, s), up); };
            for (std::size_t i = 0; i < w.size(); ++i)
                CHECK(lightslab::testing::grad_close(g.weights[i],
                                                     lightslab::testing::central_difference(w[i], 1e-3, loss)));
        }
    }

    TEST_CASE("output shapes: x2 x2 x2 on 100x100 and x2 x2 x3 on 63x84") {
        const DecoderConfig a = tiny(2, 2, {{4, 2, 0}, {4, 2, 0}, {4, 2, 0}});
        CHECK(a.upsample_product() == 8);
        const auto pa = init_decoder(a, 3, 1);
        const auto oa = decoder_forward_eval(pa, FeatureMap(1, 100, 100, 3));
        CHECK(oa.h == 800);
        CHECK(oa.w == 800);
        CHECK(oa.c == 3);

        const DecoderConfig b = tiny(2, 2, {{4, 2, 0}, {4, 2, 0}, {3, 3, 0}});
        const auto pb = init_decoder(b, 3, 1);
        const auto ob = decoder_forward_eval(pb, FeatureMap(1, 63, 84, 3));
        CHECK(ob.h == 756);
        CHECK(ob.w == 1008);

        CHECK(DecoderConfig::full(false).upsample_product() == 8);
        CHECK(DecoderConfig::full(true).upsample_product() == 12);
        CHECK(DecoderConfig::full(true).depth == 60);
        CHECK(DecoderConfig::full(true).width == 256);
    }

    TEST_CASE("channel mismatch is rejected") {
        const auto p = init_decoder(tiny(2, 3), 5, 1);
        CHECK_THROWS_AS(decoder_forward_eval(p, FeatureMap(1, 2, 2, 4)), InvalidArgument);
    }

    TEST_CASE("zero head renders 0.5 everywhere") {
        Gen gen(79);
        auto p = init_decoder(tiny(4, 4, {{4, 2, 0}}), 6, 3);
        const auto& head = p.head();
        for (std::size_t i = 0; i < static_cast<std::size_t>(head.in * head.out); ++i)
            p.params.data()[head.weight + i] = 0.0f;
        for (int c = 0; c < head.out; ++c)
            p.params.data()[*head.bias + static_cast<std::size_t>(c)] = 0.0f;
        const auto out = decoder_forward_eval(p, gen.feature_map(1, 3, 3, 6));
        for (double v : out.data)
            CHECK(v == 0.5);
    }

    TEST_CASE("property: outputs lie in [0, 1] and eval is bit-reproducible") {
        Gen gen(83);
        for (int trial = 0; trial < 10; ++trial) {
            const auto p = init_decoder(tiny(2 * gen.integer(1, 3), gen.integer(2, 6), {{4, 2, 0}}), 4, gen.bits());
            const auto x = gen.feature_map(gen.integer(1, 2), 3, 2, 4, 10.0);
            const auto a = decoder_forward_eval(p, x);
            const auto b = decoder_forward_eval(p, x);
            CHECK(a.data == b.data);
            for (double v : a.data) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            const auto t = decoder_forward(p, x, DecoderMode::train);
            for (double v : t.image.data) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
        }
    }

    TEST_CASE("train and eval agree once running statistics are frozen to the batch") {
        Gen gen(89);
        for (int trial = 0; trial < 5; ++trial) {
            auto p = init_decoder(tiny(4, 5, {{4, 2, 0}}), 7, gen.bits());
            const auto x = gen.feature_map(2, 3, 3, 7);
            auto train = decoder_forward(p, x, DecoderMode::train);
            freeze_running_statistics(p, *train.tape);
            const auto eval = decoder_forward_eval(p, x);
            for (std::size_t i = 0; i < eval.data.size(); ++i)
                CHECK(std::abs(eval.data[i] - train.image.data[i]) <= 1e-5);
        }
    }

    TEST_CASE("running statistics use momentum 0.9 over the batch statistics") {
        Gen gen(97);
        auto p = init_decoder(tiny(2, 3), 4, 5);
        const auto x = gen.feature_map(1, 3, 3, 4);
        auto out = decoder_forward(p, x, DecoderMode::train);
        const auto& cache = out.tape->blocks[0].norm1;

        // Batch statistics of the first norm input, recomputed from conv1 of the block input.
        const auto& block = p.blocks()[0];
        const FeatureMap& in = out.tape->blocks[0].input;
        for (int c = 0; c < 3; ++c) {
            std::vector<double> z;
            for (std::size_t px = 0; px < in.pixels(); ++px) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k)
                    s += p.params.data()[block.conv1.weight + static_cast<std::size_t>(c * 3 + k)] *
                         in.data[px * 3 + static_cast<std::size_t>(k)];
                z.push_back(s);
            }
            double mean = 0.0;
            for (double v : z)
                mean += v;
            mean /= static_cast<double>(z.size());
            double var = 0.0;
            for (double v : z)
                var += (v - mean) * (v - mean);
            var /= static_cast<double>(z.size());
            CHECK(cache.mean[static_cast<std::size_t>(c)] == doctest::Approx(mean).epsilon(1e-10));
            CHECK(cache.var[static_cast<std::size_t>(c)] == doctest::Approx(var).epsilon(1e-10));
        }

        update_running_statistics(p, *out.tape);
        for (int c = 0; c < 3; ++c) {
            const float m = p.buffers.data()[block.norm1.running_mean + static_cast<std::size_t>(c)];
            const float v = p.buffers.data()[block.norm1.running_var + static_cast<std::size_t>(c)];
            CHECK(m == doctest::Approx(0.1 * cache.mean[static_cast<std::size_t>(c)]).epsilon(1e-6));
            CHECK(v == doctest::Approx(0.9 + 0.1 * cache.var[static_cast<std::size_t>(c)]).epsilon(1e-6));
        }
    }

    TEST_CASE("frozen mode normalizes with running statistics and leaves them alone") {
        Gen gen(101);
        auto p = init_decoder(tiny(2, 3), 4, 5);
        const auto x = gen.feature_map(1, 2, 3, 4);
        const auto before = p.buffers;
        auto frozen = decoder_forward(p, x, DecoderMode::frozen);
        REQUIRE(frozen.tape);
        CHECK(frozen.image.data == decoder_forward_eval(p, x).data);
        update_running_statistics(p, *frozen.tape);
        CHECK(p.buffers == before);
        CHECK_THROWS_AS(freeze_running_statistics(p, *frozen.tape), InvalidState);
    }

    TEST_CASE("tape misuse is an invalid state") {
        Gen gen(103);
        auto p = init_decoder(tiny(2, 3), 4, 5);
        const auto x = gen.feature_map(1, 2, 2, 4);
        const FeatureMap up(1, 2, 2, 3);
        ActivationTape empty;
        CHECK_THROWS_AS(decoder_backward(p, empty, up), InvalidState);
        CHECK_FALSE(decoder_forward(p, x, DecoderMode::eval).tape.has_value());

        auto out = decoder_forward(p, x, DecoderMode::train);
        CHECK_NOTHROW(decoder_backward(p, *out.tape, up));
        CHECK_THROWS_AS(decoder_backward(p, *out.tape, up), InvalidState);

        auto stale = decoder_forward(p, x, DecoderMode::train);
        p.touch();
        CHECK_THROWS_AS(decoder_backward(p, *stale.tape, up), InvalidState);

        auto wrong = decoder_forward(p, x, DecoderMode::train);
        CHECK_THROWS_AS(decoder_backward(p, *wrong.tape, FeatureMap(1, 2, 2, 2)), InvalidArgument);
    }

    TEST_CASE("zero upstream gives zero gradients") {
        Gen gen(107);
        const auto p = init_decoder(tiny(4, 3, {{4, 2, 0}}), 4, 5);
        auto out = decoder_forward(p, gen.feature_map(1, 2, 2, 4), DecoderMode::train);
        const auto g = decoder_backward(p, *out.tape, FeatureMap(1, 4, 4, 3));
        for (double v : g.params)
            CHECK(v == 0.0);
        for (double v : g.input.data)
            CHECK(v == 0.0);
    }

    TEST_CASE("depth 2, width 3, 2x2 map: every gradient matches central differences") {
        Gen gen(109);
        auto p = init_decoder(tiny(2, 3), 5, 9);
        FeatureMap x = gen.feature_map(1, 2, 2, 5);
        const FeatureMap up = gen.feature_map(1, 2, 2, 3);
        auto out = decoder_forward(p, x, DecoderMode::train);
        const auto g = decoder_backward(p, *out.tape, up);
        auto loss = [&] { return dot(decoder_forward(p, x, DecoderMode::train).image, up); };
        for (std::size_t i = 0; i < p.params.size(); ++i)
            CHECK(lightslab::testing::grad_close(
                g.params[i], lightslab::testing::central_difference(p.params.values()[i], 1e-3, loss)));
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(lightslab::testing::grad_close(g.input.data[i],
                                                 lightslab::testing::central_difference(x.data[i], 1e-3, loss)));
    }

    TEST_CASE("property: randomized decoder gradients") {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
            for (DecoderMode mode : {DecoderMode::train, DecoderMode::frozen}) {
                const auto r = lightslab::testing::check_decoder_gradient(seed, mode);
                INFO(r.label << " worst: " << r.worst_entry);
                CHECK(r.ok());
            }
        }
    }

    TEST_CASE("exact GeLU and its derivative") {
        CHECK(gelu(0.0) == 0.0);
        CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429));
        CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707));
        for (double x = -4.0; x <= 4.0; x += 0.37) {
            const double h = 1e-5;
            CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + h) - gelu(x - h)) / (2 * h)).epsilon(1e-7));
        }
    }
}
