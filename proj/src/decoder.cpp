/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/decoder.hpp"
#include "lightslab/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace lightslab {

    // ---------------------------------------------------------------------------------------------
    // ParamStore

    std::size_t ParamStore::add(std::string name, std::vector<std::uint32_t> shape) {
        std::size_t count = 1;
        for (auto d : shape)
            count *= d;
        TensorSlot slot{std::move(name), std::move(shape), values_.size(), count};
        values_.resize(values_.size() + count, 0.0f);
        slots_.push_back(std::move(slot));
        return slots_.back().offset;
    }

    const TensorSlot* ParamStore::find(const std::string& name) const {
        for (const auto& s : slots_)
            if (s.name == name)
                return &s;
        return nullptr;
    }

    // ---------------------------------------------------------------------------------------------
    // Config

    void DecoderConfig::validate() const {
        if (depth < 2 || depth % 2 != 0)
            throw InvalidConfig("decoder: depth must be even and >= 2, got " + std::to_string(depth));
        if (width < 1)
            throw InvalidConfig("decoder: width must be >= 1");
        if (out_channels < 1)
            throw InvalidConfig("decoder: out_channels must be >= 1");
        for (const auto& s : sr_modules) {
            transposed_conv_padding(s.kernel_size, s.upsample_factor);
            if (s.channels < 0)
                throw InvalidConfig("decoder: SR stage channels must be >= 0");
        }
    }

    int DecoderConfig::upsample_product() const {
        int p = 1;
        for (const auto& s : sr_modules)
            p *= s.upsample_factor;
        return p;
    }

    int DecoderConfig::stage_channels(std::size_t stage) const {
        const int c = sr_modules.at(stage).channels;
        return c > 0 ? c : width;
    }

    int DecoderConfig::final_channels() const {
        return sr_modules.empty() ? width : stage_channels(sr_modules.size() - 1);
    }

    DecoderConfig DecoderConfig::full(bool forward_facing) {
        DecoderConfig c;
        c.depth = 60;
        c.width = 256;
        c.sr_modules = {{4, 2, 0}, {4, 2, 0}, forward_facing ? SrStageConfig{3, 3, 0} : SrStageConfig{4, 2, 0}};
        return c;
    }

    int transposed_conv_padding(int kernel, int stride) {
        if (kernel == 4 && stride == 2)
            return 1;
        if (kernel == 3 && stride == 3)
            return 0;
        throw InvalidConfig("transposed conv: unsupported (kernel, stride) = (" + std::to_string(kernel) + ", " +
                            std::to_string(stride) + ")");
    }

    // ---------------------------------------------------------------------------------------------
    // Layout

    namespace {

        using u32 = std::uint32_t;

        Conv1x1Layer add_conv(ParamStore& store, const std::string& name, int in, int out, bool bias) {
            Conv1x1Layer layer;
            layer.in = in;
            layer.out = out;
            layer.weight = store.add(name + ".weight", {static_cast<u32>(out), static_cast<u32>(in)});
            if (bias)
                layer.bias = store.add(name + ".bias", {static_cast<u32>(out)});
            return layer;
        }

        NormLayer add_norm(ParamStore& params, ParamStore& buffers, const std::string& name, int channels) {
            NormLayer n;
            n.channels = channels;
            n.scale = params.add(name + ".scale", {static_cast<u32>(channels)});
            n.shift = params.add(name + ".shift", {static_cast<u32>(channels)});
            n.running_mean = buffers.add(name + ".running_mean", {static_cast<u32>(channels)});
            n.running_var = buffers.add(name + ".running_var", {static_cast<u32>(channels)});
            for (int c = 0; c < channels; ++c) {
                params.data()[n.scale + static_cast<std::size_t>(c)] = 1.0f;
                buffers.data()[n.running_var + static_cast<std::size_t>(c)] = 1.0f;
            }
            return n;
        }

        // Convs feeding a norm carry no bias; the norm shift subsumes it.
        ResidualBlockLayer add_block(ParamStore& params, ParamStore& buffers, const std::string& name, int c) {
            ResidualBlockLayer b;
            b.conv1 = add_conv(params, name + ".conv1", c, c, false);
            b.norm1 = add_norm(params, buffers, name + ".norm1", c);
            b.conv2 = add_conv(params, name + ".conv2", c, c, false);
            b.norm2 = add_norm(params, buffers, name + ".norm2", c);
            return b;
        }

    } // namespace

    DecoderParams::DecoderParams(const DecoderConfig& config, int in_channels)
        : config_(config), in_channels_(in_channels) {
        config.validate();
        if (in_channels < 1)
            throw InvalidConfig("decoder: in_channels must be >= 1");

        stem_ = add_conv(params, "stem", in_channels, config.width, true);
        for (int i = 0; i < config.depth / 2; ++i)
            blocks_.push_back(add_block(params, buffers, "blocks." + std::to_string(i), config.width));

        int c = config.width;
        for (std::size_t s = 0; s < config.sr_modules.size(); ++s) {
            const auto& sc = config.sr_modules[s];
            const int out = config.stage_channels(s);
            const std::string name = "sr." + std::to_string(s);
            SrStageLayer stage;
            stage.up.in = c;
            stage.up.out = out;
            stage.up.kernel = sc.kernel_size;
            stage.up.stride = sc.upsample_factor;
            stage.up.weight = params.add(name + ".up.weight", {static_cast<u32>(sc.kernel_size),
                                                                static_cast<u32>(sc.kernel_size), static_cast<u32>(c),
                                                                static_cast<u32>(out)});
            stage.up.bias = params.add(name + ".up.bias", {static_cast<u32>(out)});
            for (int j = 0; j < 2; ++j)
                stage.blocks.push_back(add_block(params, buffers, name + ".blocks." + std::to_string(j), out));
            sr_stages_.push_back(std::move(stage));
            c = out;
        }
        head_ = add_conv(params, "head", c, config.out_channels, true);
    }

    DecoderParams init_decoder(const DecoderConfig& config, int in_channels, std::uint64_t seed) {
        DecoderParams p(config, in_channels);
        std::mt19937_64 rng(seed);
        auto fill = [&](std::size_t offset, std::size_t count, double fan_in) {
            const double s = std::sqrt(1.0 / fan_in);
            std::uniform_real_distribution<double> dist(-s, s);
            for (std::size_t i = 0; i < count; ++i)
                p.params.data()[offset + i] = static_cast<float>(dist(rng));
        };
        auto fill_conv = [&](const Conv1x1Layer& l) {
            fill(l.weight, static_cast<std::size_t>(l.in) * l.out, l.in);
            if (l.bias)
                fill(*l.bias, static_cast<std::size_t>(l.out), l.in);
        };

        fill_conv(p.stem());
        for (const auto& b : p.blocks()) {
            fill_conv(b.conv1);
            fill_conv(b.conv2);
        }
        for (const auto& s : p.sr_stages()) {
            // Each output pixel sees in * (k / stride)^2 input taps.
            const double taps = static_cast<double>(s.up.kernel) / s.up.stride;
            const double fan_in = s.up.in * taps * taps;
            fill(s.up.weight, static_cast<std::size_t>(s.up.kernel) * s.up.kernel * s.up.in * s.up.out, fan_in);
            fill(s.up.bias, static_cast<std::size_t>(s.up.out), fan_in);
            for (const auto& b : s.blocks) {
                fill_conv(b.conv1);
                fill_conv(b.conv2);
            }
        }
        fill_conv(p.head());
        return p;
    }

    // ---------------------------------------------------------------------------------------------
    // Elementwise

    double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5)); }

    double gelu_derivative(double x) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 * 0.5));
        const double pdf = std::exp(-0.5 * x * x) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
        return cdf + x * pdf;
    }

    namespace {

        FeatureMap apply_gelu(const FeatureMap& x) {
            FeatureMap y = x;
            for (double& v : y.data)
                v = gelu(v);
            return y;
        }

        // dy * gelu'(pre), in place on dy.
        void gelu_backward_inplace(FeatureMap& dy, const FeatureMap& pre) {
            for (std::size_t i = 0; i < dy.data.size(); ++i)
                dy.data[i] *= gelu_derivative(pre.data[i]);
        }

        using FloatRowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

        RowMatrix load_matrix(const ParamStore& store, std::size_t offset, int rows, int cols) {
            return Eigen::Map<const FloatRowMatrix>(store.data() + offset, rows, cols).cast<double>();
        }

        Eigen::RowVectorXd load_row(const ParamStore& store, std::size_t offset, int n) {
            return Eigen::Map<const Eigen::RowVectorXf>(store.data() + offset, n).cast<double>();
        }

        // -----------------------------------------------------------------------------------------
        // 1x1 conv

        FeatureMap conv_forward(const ParamStore& params, const Conv1x1Layer& layer, const FeatureMap& x) {
            FeatureMap y(x.n, x.h, x.w, layer.out);
            const RowMatrix w = load_matrix(params, layer.weight, layer.out, layer.in);
            y.matrix().noalias() = x.matrix() * w.transpose();
            if (layer.bias)
                y.matrix().rowwise() += load_row(params, *layer.bias, layer.out);
            return y;
        }

        FeatureMap conv_backward(const ParamStore& params, const Conv1x1Layer& layer, const FeatureMap& x,
                                 const FeatureMap& dy, std::vector<double>& grads) {
            MatrixView dw(grads.data() + layer.weight, layer.out, layer.in);
            dw.noalias() += dy.matrix().transpose() * x.matrix();
            if (layer.bias) {
                Eigen::Map<Eigen::RowVectorXd> db(grads.data() + *layer.bias, layer.out);
                db += dy.matrix().colwise().sum();
            }
            FeatureMap dx(x.n, x.h, x.w, layer.in);
            dx.matrix().noalias() = dy.matrix() * load_matrix(params, layer.weight, layer.out, layer.in);
            return dx;
        }

        // -----------------------------------------------------------------------------------------
        // Normalization

        FeatureMap norm_forward(const DecoderParams& p, const NormLayer& layer, const FeatureMap& x, DecoderMode mode,
                                NormCache* cache) {
            const auto X = x.matrix();
            const double count = static_cast<double>(X.rows());
            Eigen::RowVectorXd mean;
            Eigen::RowVectorXd var;
            if (mode == DecoderMode::train) {
                mean = X.colwise().sum() / count;
                var = (X.rowwise() - mean).array().square().colwise().sum().matrix() / count;
            } else {
                mean = load_row(p.buffers, layer.running_mean, layer.channels);
                var = load_row(p.buffers, layer.running_var, layer.channels);
            }
            const Eigen::RowVectorXd inv_std = (var.array() + kNormEpsilon).rsqrt().matrix();

            FeatureMap xhat(x.n, x.h, x.w, x.c);
            xhat.matrix() = ((X.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();

            const Eigen::RowVectorXd gamma = load_row(p.params, layer.scale, layer.channels);
            const Eigen::RowVectorXd beta = load_row(p.params, layer.shift, layer.channels);
            FeatureMap y(x.n, x.h, x.w, x.c);
            y.matrix() = ((xhat.matrix().array().rowwise() * gamma.array()).rowwise() + beta.array()).matrix();

            if (cache) {
                cache->mean.assign(mean.data(), mean.data() + mean.size());
                cache->var.assign(var.data(), var.data() + var.size());
                cache->inv_std.assign(inv_std.data(), inv_std.data() + inv_std.size());
                cache->normalized = std::move(xhat);
                cache->batch_statistics = mode == DecoderMode::train;
            }
            return y;
        }

        FeatureMap norm_backward(const DecoderParams& p, const NormLayer& layer, const NormCache& cache,
                                 const FeatureMap& dy, std::vector<double>& grads) {
            const auto DY = dy.matrix();
            const auto XH = cache.normalized.matrix();
            const double count = static_cast<double>(DY.rows());

            const Eigen::RowVectorXd dgamma = (DY.array() * XH.array()).colwise().sum().matrix();
            const Eigen::RowVectorXd dbeta = DY.colwise().sum();
            Eigen::Map<Eigen::RowVectorXd>(grads.data() + layer.scale, layer.channels) += dgamma;
            Eigen::Map<Eigen::RowVectorXd>(grads.data() + layer.shift, layer.channels) += dbeta;

            const Eigen::RowVectorXd gamma = load_row(p.params, layer.scale, layer.channels);
            const Eigen::Map<const Eigen::RowVectorXd> inv_std(cache.inv_std.data(), layer.channels);
            const Eigen::RowVectorXd coeff = (gamma.array() * inv_std.array()).matrix();
            const Eigen::RowVectorXd mean_dy = dbeta / count;
            const Eigen::RowVectorXd mean_dy_xhat = dgamma / count;

            FeatureMap dx(dy.n, dy.h, dy.w, dy.c);
            if (!cache.batch_statistics) {
                dx.matrix() = (DY.array().rowwise() * coeff.array()).matrix();
                return dx;
            }
            dx.matrix() = (((DY.rowwise() - mean_dy) - (XH.array().rowwise() * mean_dy_xhat.array()).matrix())
                               .array()
                               .rowwise() *
                           coeff.array())
                              .matrix();
            return dx;
        }

        // -----------------------------------------------------------------------------------------
        // Residual block: conv -> norm -> GeLU -> conv -> norm, skip add, GeLU

        FeatureMap block_forward(const DecoderParams& p, const ResidualBlockLayer& b, const FeatureMap& x,
                                 DecoderMode mode, BlockCache* cache) {
            const FeatureMap h1 = conv_forward(p.params, b.conv1, x);
            FeatureMap n1 = norm_forward(p, b.norm1, h1, mode, cache ? &cache->norm1 : nullptr);
            FeatureMap a1 = apply_gelu(n1);
            const FeatureMap h2 = conv_forward(p.params, b.conv2, a1);
            FeatureMap s = norm_forward(p, b.norm2, h2, mode, cache ? &cache->norm2 : nullptr);
            s.matrix() += x.matrix();
            FeatureMap out = apply_gelu(s);
            if (cache) {
                cache->input = x;
                cache->act1_pre = std::move(n1);
                cache->act1 = std::move(a1);
                cache->sum = std::move(s);
            }
            return out;
        }

        FeatureMap block_backward(const DecoderParams& p, const ResidualBlockLayer& b, const BlockCache& cache,
                                  FeatureMap dout, std::vector<double>& grads) {
            gelu_backward_inplace(dout, cache.sum); // dout is now dL/dsum
            const FeatureMap dh2 = norm_backward(p, b.norm2, cache.norm2, dout, grads);
            FeatureMap da1 = conv_backward(p.params, b.conv2, cache.act1, dh2, grads);
            gelu_backward_inplace(da1, cache.act1_pre);
            const FeatureMap dh1 = norm_backward(p, b.norm1, cache.norm1, da1, grads);
            FeatureMap dx = conv_backward(p.params, b.conv1, cache.input, dh1, grads);
            dx.matrix() += dout.matrix();
            return dx;
        }

        FeatureMap sigmoid(FeatureMap z) {
            for (double& v : z.data)
                v = 1.0 / (1.0 + std::exp(-v));
            return z;
        }

        void check_features(const DecoderParams& params, const FeatureMap& features) {
            if (features.c != params.in_channels())
                throw InvalidArgument("decoder_forward: feature map has " + std::to_string(features.c) +
                                      " channels, stem expects " + std::to_string(params.in_channels()));
            if (features.n < 1 || features.h < 1 || features.w < 1)
                throw InvalidArgument("decoder_forward: empty feature map");
        }

        // -----------------------------------------------------------------------------------------
        // Transposed convolution core, raw float weights

        struct TapGeometry {
            int kernel;
            int stride;
            int padding;
        };

        Eigen::Map<const FloatRowMatrix> tap_weights(std::span<const float> weights, int tap, int in, int out) {
            return {weights.data() + static_cast<std::size_t>(tap) * in * out, in, out};
        }

        void check_tconv(const FeatureMap& input, std::span<const float> weights, int out_channels, int kernel,
                         int stride) {
            transposed_conv_padding(kernel, stride);
            if (weights.size() != static_cast<std::size_t>(kernel) * kernel * input.c * out_channels)
                throw InvalidArgument("transposed conv: weight count does not match [k, k, in, out]");
        }

    } // namespace

    FeatureMap transposed_conv_forward(const FeatureMap& input, std::span<const float> weights, int out_channels,
                                       int kernel, int stride, std::span<const float> bias) {
        check_tconv(input, weights, out_channels, kernel, stride);
        const int pad = transposed_conv_padding(kernel, stride);
        FeatureMap out(input.n, input.h * stride, input.w * stride, out_channels);

        RowMatrix contrib(static_cast<Eigen::Index>(input.pixels()), out_channels);
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const int tap = ky * kernel + kx;
                contrib.noalias() = input.matrix() * tap_weights(weights, tap, input.c, out_channels).cast<double>();
                for (int b = 0; b < input.n; ++b) {
                    for (int iy = 0; iy < input.h; ++iy) {
                        const int oy = iy * stride - pad + ky;
                        if (oy < 0 || oy >= out.h)
                            continue;
                        for (int ix = 0; ix < input.w; ++ix) {
                            const int ox = ix * stride - pad + kx;
                            if (ox < 0 || ox >= out.w)
                                continue;
                            const auto row = static_cast<Eigen::Index>((static_cast<std::size_t>(b) * input.h + iy) *
                                                                           input.w +
                                                                       ix);
                            double* dst = &out.at(b, oy, ox, 0);
                            const double* src = contrib.data() + row * out_channels;
                            for (int c = 0; c < out_channels; ++c)
                                dst[c] += src[c];
                        }
                    }
                }
            }
        }
        if (!bias.empty()) {
            if (bias.size() != static_cast<std::size_t>(out_channels))
                throw InvalidArgument("transposed conv: bias size mismatch");
            out.matrix().rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.data(), out_channels).cast<double>();
        }
        return out;
    }

    TransposedConvGradients transposed_conv_backward(const FeatureMap& input, std::span<const float> weights,
                                                     int out_channels, int kernel, int stride,
                                                     const FeatureMap& upstream) {
        check_tconv(input, weights, out_channels, kernel, stride);
        const int pad = transposed_conv_padding(kernel, stride);
        if (upstream.n != input.n || upstream.h != input.h * stride || upstream.w != input.w * stride ||
            upstream.c != out_channels)
            throw InvalidArgument("transposed conv backward: upstream shape mismatch");

        TransposedConvGradients g;
        g.input = FeatureMap(input.n, input.h, input.w, input.c);
        g.weights.assign(weights.size(), 0.0);
        g.bias.assign(static_cast<std::size_t>(out_channels), 0.0);
        Eigen::Map<Eigen::RowVectorXd>(g.bias.data(), out_channels) = upstream.matrix().colwise().sum();

        RowMatrix gathered(static_cast<Eigen::Index>(input.pixels()), out_channels);
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const int tap = ky * kernel + kx;
                gathered.setZero();
                for (int b = 0; b < input.n; ++b) {
                    for (int iy = 0; iy < input.h; ++iy) {
                        const int oy = iy * stride - pad + ky;
                        if (oy < 0 || oy >= upstream.h)
                            continue;
                        for (int ix = 0; ix < input.w; ++ix) {
                            const int ox = ix * stride - pad + kx;
                            if (ox < 0 || ox >= upstream.w)
                                continue;
                            const auto row = static_cast<Eigen::Index>((static_cast<std::size_t>(b) * input.h + iy) *
                                                                           input.w +
                                                                       ix);
                            const double* src = upstream.data.data() + upstream.index(b, oy, ox, 0);
                            double* dst = gathered.data() + row * out_channels;
                            for (int c = 0; c < out_channels; ++c)
                                dst[c] = src[c];
                        }
                    }
                }
                MatrixView dw(g.weights.data() + static_cast<std::size_t>(tap) * input.c * out_channels, input.c,
                              out_channels);
                dw.noalias() += input.matrix().transpose() * gathered;
                g.input.matrix().noalias() +=
                    gathered * tap_weights(weights, tap, input.c, out_channels).cast<double>().transpose();
            }
        }
        return g;
    }

    // ---------------------------------------------------------------------------------------------
    // Whole decoder

    DecoderOutput decoder_forward(const DecoderParams& params, const FeatureMap& features, DecoderMode mode) {
        check_features(params, features);
        const bool train = mode != DecoderMode::eval;
        DecoderOutput result;
        ActivationTape tape;

        FeatureMap x = conv_forward(params.params, params.stem(), features);
        if (train) {
            tape.stem_input = features;
            tape.blocks.resize(params.blocks().size());
            tape.sr_stages.resize(params.sr_stages().size());
        }
        for (std::size_t i = 0; i < params.blocks().size(); ++i)
            x = block_forward(params, params.blocks()[i], x, mode, train ? &tape.blocks[i] : nullptr);

        for (std::size_t s = 0; s < params.sr_stages().size(); ++s) {
            const SrStageLayer& stage = params.sr_stages()[s];
            const auto& up = stage.up;
            FeatureMap y = transposed_conv_forward(
                x, params.params.slice(up.weight, static_cast<std::size_t>(up.kernel) * up.kernel * up.in * up.out),
                up.out, up.kernel, up.stride, params.params.slice(up.bias, static_cast<std::size_t>(up.out)));
            if (train) {
                tape.sr_stages[s].input = std::move(x);
                tape.sr_stages[s].blocks.resize(stage.blocks.size());
            }
            x = std::move(y);
            for (std::size_t j = 0; j < stage.blocks.size(); ++j)
                x = block_forward(params, stage.blocks[j], x, mode, train ? &tape.sr_stages[s].blocks[j] : nullptr);
        }

        result.image = sigmoid(conv_forward(params.params, params.head(), x));
        if (train) {
            tape.head_input = std::move(x);
            tape.output = result.image;
            tape.owner = &params;
            tape.version = params.version();
            tape.mode = mode;
            result.tape = std::move(tape);
        }
        return result;
    }

    FeatureMap decoder_forward_eval(const DecoderParams& params, const FeatureMap& features) {
        return decoder_forward(params, features, DecoderMode::eval).image;
    }

    DecoderGradients decoder_backward(const DecoderParams& params, ActivationTape& tape, const FeatureMap& upstream) {
        if (tape.owner == nullptr)
            throw InvalidState("decoder_backward: no activation tape; run forward in train mode first");
        if (tape.consumed)
            throw InvalidState("decoder_backward: tape already consumed by a previous backward call");
        if (tape.owner != &params || tape.version != params.version())
            throw InvalidState("decoder_backward: tape was recorded for different or since-modified parameters");
        if (!upstream.same_shape(tape.output))
            throw InvalidArgument("decoder_backward: upstream gradient shape does not match the output");
        tape.consumed = true;

        DecoderGradients g;
        g.params.assign(params.params.size(), 0.0);

        // Sigmoid head.
        FeatureMap dz = upstream;
        for (std::size_t i = 0; i < dz.data.size(); ++i) {
            const double s = tape.output.data[i];
            dz.data[i] *= s * (1.0 - s);
        }
        FeatureMap dx = conv_backward(params.params, params.head(), tape.head_input, dz, g.params);

        for (std::size_t s = params.sr_stages().size(); s-- > 0;) {
            const SrStageLayer& stage = params.sr_stages()[s];
            const SrStageCache& cache = tape.sr_stages[s];
            for (std::size_t j = stage.blocks.size(); j-- > 0;)
                dx = block_backward(params, stage.blocks[j], cache.blocks[j], std::move(dx), g.params);
            const auto& up = stage.up;
            const std::size_t wcount = static_cast<std::size_t>(up.kernel) * up.kernel * up.in * up.out;
            TransposedConvGradients tg = transposed_conv_backward(cache.input, params.params.slice(up.weight, wcount),
                                                                  up.out, up.kernel, up.stride, dx);
            for (std::size_t i = 0; i < wcount; ++i)
                g.params[up.weight + i] += tg.weights[i];
            for (int c = 0; c < up.out; ++c)
                g.params[up.bias + static_cast<std::size_t>(c)] += tg.bias[static_cast<std::size_t>(c)];
            dx = std::move(tg.input);
        }

        for (std::size_t i = params.blocks().size(); i-- > 0;)
            dx = block_backward(params, params.blocks()[i], tape.blocks[i], std::move(dx), g.params);

        g.input = conv_backward(params.params, params.stem(), tape.stem_input, dx, g.params);
        return g;
    }

    // ---------------------------------------------------------------------------------------------
    // Running statistics

    namespace {

        template <class Fn>
        void for_each_norm(const DecoderParams& params, const ActivationTape& tape, Fn&& fn) {
            if (tape.owner != &params)
                throw InvalidState("running statistics: tape does not belong to these parameters");
            for (std::size_t i = 0; i < params.blocks().size(); ++i) {
                fn(params.blocks()[i].norm1, tape.blocks[i].norm1);
                fn(params.blocks()[i].norm2, tape.blocks[i].norm2);
            }
            for (std::size_t s = 0; s < params.sr_stages().size(); ++s) {
                const auto& stage = params.sr_stages()[s];
                for (std::size_t j = 0; j < stage.blocks.size(); ++j) {
                    fn(stage.blocks[j].norm1, tape.sr_stages[s].blocks[j].norm1);
                    fn(stage.blocks[j].norm2, tape.sr_stages[s].blocks[j].norm2);
                }
            }
        }

    } // namespace

    void update_running_statistics(DecoderParams& params, const ActivationTape& tape, double momentum) {
        if (tape.mode != DecoderMode::train)
            return;
        float* buf = params.buffers.data();
        for_each_norm(params, tape, [&](const NormLayer& layer, const NormCache& cache) {
            for (int c = 0; c < layer.channels; ++c) {
                float& m = buf[layer.running_mean + static_cast<std::size_t>(c)];
                float& v = buf[layer.running_var + static_cast<std::size_t>(c)];
                m = static_cast<float>(momentum * m + (1.0 - momentum) * cache.mean[static_cast<std::size_t>(c)]);
                v = static_cast<float>(momentum * v + (1.0 - momentum) * cache.var[static_cast<std::size_t>(c)]);
            }
        });
    }

    void freeze_running_statistics(DecoderParams& params, const ActivationTape& tape) {
        if (tape.mode != DecoderMode::train)
            throw InvalidState("freeze_running_statistics: tape holds no batch statistics");
        float* buf = params.buffers.data();
        for_each_norm(params, tape, [&](const NormLayer& layer, const NormCache& cache) {
            for (int c = 0; c < layer.channels; ++c) {
                buf[layer.running_mean + static_cast<std::size_t>(c)] =
                    static_cast<float>(cache.mean[static_cast<std::size_t>(c)]);
                buf[layer.running_var + static_cast<std::size_t>(c)] =
                    static_cast<float>(cache.var[static_cast<std::size_t>(c)]);
            }
        });
    }

} // namespace lightslab
