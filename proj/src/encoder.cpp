/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/encoder.hpp"
#include "lightslab/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace lightslab {

    void EncoderConfig::validate() const {
        if (levels < 1)
            throw InvalidConfig("encoder: levels must be >= 1");
        if (feature_dim < 1)
            throw InvalidConfig("encoder: feature_dim must be >= 1");
        if (min_resolution < 2 || max_resolution < min_resolution)
            throw InvalidConfig("encoder: need 2 <= min_resolution <= max_resolution");
    }

    std::vector<int> level_resolutions(const EncoderConfig& config) {
        config.validate();
        if (config.levels == 1)
            return {config.min_resolution};
        const double log_growth =
            (std::log(static_cast<double>(config.max_resolution)) - std::log(static_cast<double>(config.min_resolution))) /
            (config.levels - 1);
        std::vector<int> res;
        res.reserve(static_cast<std::size_t>(config.levels));
        for (int l = 0; l < config.levels; ++l) {
            // The guard keeps exact endpoints (16 * b^15 == 256) from flooring to 255.
            const double n = config.min_resolution * std::exp(l * log_growth);
            res.push_back(static_cast<int>(std::floor(n + 1e-9)));
        }
        return res;
    }

    FeatureGridPyramid::FeatureGridPyramid(const EncoderConfig& config)
        : config_(config), resolutions_(level_resolutions(config)) {
        std::size_t offset = 0;
        for (int n : resolutions_) {
            level_offsets_.push_back(offset);
            offset += 6u * static_cast<std::size_t>(n) * n * config_.feature_dim;
        }
        values_.assign(offset, 0.0f);
    }

    std::size_t FeatureGridPyramid::grid_offset(int level, int pair) const {
        const auto n = static_cast<std::size_t>(resolutions_[static_cast<std::size_t>(level)]);
        return level_offsets_[static_cast<std::size_t>(level)] + static_cast<std::size_t>(pair) * n * n * config_.feature_dim;
    }

    std::size_t FeatureGridPyramid::node_offset(int level, int pair, int i, int j) const {
        const auto n = static_cast<std::size_t>(resolutions_[static_cast<std::size_t>(level)]);
        return grid_offset(level, pair) + (static_cast<std::size_t>(i) * n + j) * config_.feature_dim;
    }

    FeatureGridPyramid init_pyramid(const EncoderConfig& config, std::uint64_t seed) {
        FeatureGridPyramid p(config);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<float> dist(-1e-4f, 1e-4f);
        for (float& v : p.values())
            v = dist(rng);
        return p;
    }

    BilinearTap bilinear_tap(double a, double b, int resolution) {
        const int last = resolution - 1;
        const double pa = a * last;
        const double pb = b * last;
        const int ia = std::min(static_cast<int>(std::floor(pa)), last - 1);
        const int ib = std::min(static_cast<int>(std::floor(pb)), last - 1);
        const double ta = pa - ia;
        const double tb = pb - ib;
        BilinearTap tap;
        tap.i = {ia, ia, ia + 1, ia + 1};
        tap.j = {ib, ib + 1, ib, ib + 1};
        tap.weight = {(1.0 - ta) * (1.0 - tb), (1.0 - ta) * tb, ta * (1.0 - tb), ta * tb};
        return tap;
    }

    namespace {

        void check_unit(const Ray4& r) {
            for (int a = 0; a < 4; ++a) {
                // Written so NaN fails too.
                if (!(r[a] >= 0.0 && r[a] <= 1.0))
                    throw OutOfBounds("encode_ray: coordinate " + std::to_string(a) + " = " + std::to_string(r[a]) +
                                      " outside [0, 1]; normalize first");
            }
        }

    } // namespace

    void encode_ray_into(const FeatureGridPyramid& pyramid, const Ray4& r_unit, std::span<double> out) {
        check_unit(r_unit);
        const int F = pyramid.feature_dim();
        const auto values = pyramid.values();
        std::size_t k = 0;
        for (int l = 0; l < pyramid.config().levels; ++l) {
            const int n = pyramid.resolutions()[static_cast<std::size_t>(l)];
            for (int p = 0; p < 6; ++p) {
                const auto [ax, bx] = kAxisPairs[static_cast<std::size_t>(p)];
                const BilinearTap tap = bilinear_tap(r_unit[ax], r_unit[bx], n);
                for (int f = 0; f < F; ++f)
                    out[k + static_cast<std::size_t>(f)] = 0.0;
                for (int q = 0; q < 4; ++q) {
                    const double w = tap.weight[static_cast<std::size_t>(q)];
                    const float* node = values.data() + pyramid.node_offset(l, p, tap.i[static_cast<std::size_t>(q)],
                                                                            tap.j[static_cast<std::size_t>(q)]);
                    for (int f = 0; f < F; ++f)
                        out[k + static_cast<std::size_t>(f)] += w * node[f];
                }
                k += static_cast<std::size_t>(F);
            }
        }
    }

    std::vector<double> encode_ray(const FeatureGridPyramid& pyramid, const Ray4& r_unit) {
        std::vector<double> out(static_cast<std::size_t>(pyramid.config().channels()));
        encode_ray_into(pyramid, r_unit, out);
        return out;
    }

    FeatureMap encode_bundles(const FeatureGridPyramid& pyramid, std::span<const RayBundle> bundles) {
        if (bundles.empty())
            throw InvalidArgument("encode_bundles: empty batch");
        const int h = bundles.front().h_l;
        const int w = bundles.front().w_l;
        const int c = pyramid.config().channels();
        FeatureMap map(static_cast<int>(bundles.size()), h, w, c);
        for (std::size_t b = 0; b < bundles.size(); ++b) {
            const RayBundle& bundle = bundles[b];
            if (bundle.h_l != h || bundle.w_l != w || bundle.rays.size() != static_cast<std::size_t>(h) * w)
                throw InvalidArgument("encode_bundles: bundles differ in shape");
            for (std::size_t i = 0; i < bundle.rays.size(); ++i) {
                std::span<double> out(map.data.data() + (b * bundle.rays.size() + i) * static_cast<std::size_t>(c),
                                      static_cast<std::size_t>(c));
                encode_ray_into(pyramid, bundle.rays[i], out);
            }
        }
        return map;
    }

    FeatureMap encode_bundle(const FeatureGridPyramid& pyramid, const RayBundle& bundle) {
        return encode_bundles(pyramid, std::span<const RayBundle>(&bundle, 1));
    }

    void accumulate_encoder_gradient(const FeatureGridPyramid& pyramid, const RayBundle& bundle,
                                     const FeatureMap& upstream_grad, int batch_index, std::span<double> grad) {
        const int c = pyramid.config().channels();
        if (upstream_grad.c != c || upstream_grad.h != bundle.h_l || upstream_grad.w != bundle.w_l ||
            batch_index < 0 || batch_index >= upstream_grad.n ||
            bundle.rays.size() != static_cast<std::size_t>(bundle.h_l) * bundle.w_l)
            throw InvalidArgument("encoder_backward: upstream gradient shape does not match the bundle");
        if (grad.size() != pyramid.parameter_count())
            throw InvalidArgument("encoder_backward: gradient buffer size mismatch");

        const int F = pyramid.feature_dim();
        const std::size_t base = static_cast<std::size_t>(batch_index) * bundle.rays.size();
        for (std::size_t i = 0; i < bundle.rays.size(); ++i) {
            const Ray4& r = bundle.rays[i];
            check_unit(r);
            const double* g = upstream_grad.data.data() + (base + i) * static_cast<std::size_t>(c);
            std::size_t k = 0;
            for (int l = 0; l < pyramid.config().levels; ++l) {
                const int n = pyramid.resolutions()[static_cast<std::size_t>(l)];
                for (int p = 0; p < 6; ++p) {
                    const auto [ax, bx] = kAxisPairs[static_cast<std::size_t>(p)];
                    const BilinearTap tap = bilinear_tap(r[ax], r[bx], n);
                    for (int q = 0; q < 4; ++q) {
                        const double w = tap.weight[static_cast<std::size_t>(q)];
                        double* node = grad.data() + pyramid.node_offset(l, p, tap.i[static_cast<std::size_t>(q)],
                                                                         tap.j[static_cast<std::size_t>(q)]);
                        for (int f = 0; f < F; ++f)
                            node[f] += w * g[k + static_cast<std::size_t>(f)];
                    }
                    k += static_cast<std::size_t>(F);
                }
            }
        }
    }

    std::vector<double> encoder_backward(const FeatureGridPyramid& pyramid, const RayBundle& bundle,
                                         const FeatureMap& upstream_grad) {
        if (upstream_grad.n != 1)
            throw InvalidArgument("encoder_backward: expected a single-bundle upstream gradient");
        std::vector<double> grad(pyramid.parameter_count(), 0.0);
        accumulate_encoder_gradient(pyramid, bundle, upstream_grad, 0, grad);
        return grad;
    }

    std::vector<double> frequency_encode(const Ray4& r, int num_freqs) {
        if (num_freqs < 0)
            throw InvalidArgument("frequency_encode: num_freqs must be >= 0");
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(frequency_channels(num_freqs)));
        for (int a = 0; a < 4; ++a)
            out.push_back(r[a]);
        double scale = std::numbers::pi;
        for (int k = 0; k < num_freqs; ++k) {
            for (int a = 0; a < 4; ++a) {
                out.push_back(std::sin(scale * r[a]));
                out.push_back(std::cos(scale * r[a]));
            }
            scale *= 2.0;
        }
        return out;
    }

    FeatureMap frequency_encode_bundles(std::span<const RayBundle> bundles, int num_freqs) {
        if (bundles.empty())
            throw InvalidArgument("frequency_encode_bundles: empty batch");
        const int h = bundles.front().h_l;
        const int w = bundles.front().w_l;
        const int c = frequency_channels(num_freqs);
        FeatureMap map(static_cast<int>(bundles.size()), h, w, c);
        std::size_t k = 0;
        for (const auto& bundle : bundles) {
            if (bundle.h_l != h || bundle.w_l != w)
                throw InvalidArgument("frequency_encode_bundles: bundles differ in shape");
            for (const auto& r : bundle.rays) {
                const auto f = frequency_encode(r, num_freqs);
                std::copy(f.begin(), f.end(), map.data.begin() + static_cast<std::ptrdiff_t>(k));
                k += f.size();
            }
        }
        return map;
    }

} // namespace lightslab
