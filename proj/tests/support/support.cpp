/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "support.hpp"

#include "lightslab/dataset.hpp"
#include "lightslab/trainer.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lightslab::testing {

    namespace {

        constexpr double kRel = 1e-3;
        constexpr double kAbsFloor = 1e-5;
        constexpr double kStep = 1e-4;

        double dot(const FeatureMap& a, const FeatureMap& b) {
            double s = 0.0;
            for (std::size_t i = 0; i < a.data.size(); ++i)
                s += a.data[i] * b.data[i];
            return s;
        }

        std::string slot_name(const ParamStore& store, std::size_t index) {
            for (const auto& slot : store.slots())
                if (index >= slot.offset && index < slot.offset + slot.size)
                    return slot.name + "[" + std::to_string(index - slot.offset) + "]";
            return "?[" + std::to_string(index) + "]";
        }

        void perturb_normalization(DecoderParams& params, Gen& gen, bool buffers_too) {
            auto each_norm = [&](const NormLayer& n) {
                for (int c = 0; c < n.channels; ++c) {
                    params.params.data()[n.scale + static_cast<std::size_t>(c)] =
                        static_cast<float>(gen.uniform(0.5, 1.5));
                    params.params.data()[n.shift + static_cast<std::size_t>(c)] =
                        static_cast<float>(gen.uniform(-0.3, 0.3));
                    if (buffers_too) {
                        params.buffers.data()[n.running_mean + static_cast<std::size_t>(c)] =
                            static_cast<float>(gen.uniform(-0.3, 0.3));
                        params.buffers.data()[n.running_var + static_cast<std::size_t>(c)] =
                            static_cast<float>(gen.uniform(0.5, 2.0));
                    }
                }
            };
            auto each_block = [&](const ResidualBlockLayer& b) {
                each_norm(b.norm1);
                each_norm(b.norm2);
            };
            for (const auto& b : params.blocks())
                each_block(b);
            for (const auto& s : params.sr_stages())
                for (const auto& b : s.blocks)
                    each_block(b);
        }

    } // namespace

    Vec3 Gen::unit_vec3() {
        for (;;) {
            const Vec3 v = vec3();
            const double n = v.norm();
            if (n > 1e-3 && n <= 1.0)
                return v / n;
        }
    }

    Mat3 Gen::rotation() {
        const Eigen::Quaterniond q(normal(), normal(), normal(), normal());
        return q.normalized().toRotationMatrix();
    }

    Pose Gen::pose(double spread) {
        Pose p;
        p.rotation = rotation();
        p.translation = vec3(-spread, spread);
        return p;
    }

    Ray4 Gen::unit_ray4() { return {uniform(), uniform(), uniform(), uniform()}; }

    FeatureMap Gen::feature_map(int n, int h, int w, int c, double scale) {
        FeatureMap m(n, h, w, c);
        for (auto& v : m.data)
            v = scale * normal();
        return m;
    }

    FeatureGridPyramid Gen::pyramid(const EncoderConfig& config, double scale) {
        FeatureGridPyramid p(config);
        for (auto& v : p.values())
            v = static_cast<float>(uniform(-scale, scale));
        return p;
    }

    RayBundle Gen::unit_bundle(int h, int w) {
        RayBundle b;
        b.h_l = h;
        b.w_l = w;
        for (int i = 0; i < h * w; ++i)
            b.rays.push_back(unit_ray4());
        return b;
    }

    bool grad_close(double analytic, double numeric, double rel, double abs_floor) {
        return std::abs(analytic - numeric) <= std::max(abs_floor, rel * std::max(std::abs(analytic), std::abs(numeric)));
    }

    void GradReport::record(const std::string& entry, double analytic, double numeric) {
        ++checked;
        const double scale = std::max(kAbsFloor, kRel * std::max(std::abs(analytic), std::abs(numeric)));
        const double err = std::abs(analytic - numeric) / scale;
        if (err > 1.0)
            ++failed;
        if (err > worst_error) {
            worst_error = err;
            std::ostringstream os;
            os << entry << " analytic " << analytic << " numeric " << numeric;
            worst_entry = os.str();
        }
    }

    GradReport check_encoder_gradient(std::uint64_t seed) {
        Gen gen(seed);
        EncoderConfig cfg;
        cfg.levels = gen.integer(1, 3);
        cfg.feature_dim = gen.integer(1, 3);
        cfg.min_resolution = gen.integer(2, 4);
        cfg.max_resolution = cfg.min_resolution + gen.integer(0, 4);
        FeatureGridPyramid pyramid = gen.pyramid(cfg);
        const RayBundle bundle = gen.unit_bundle(gen.integer(1, 3), gen.integer(1, 3));
        const FeatureMap upstream = gen.feature_map(1, bundle.h_l, bundle.w_l, cfg.channels());

        GradReport report;
        report.label = "encoder L=" + std::to_string(cfg.levels) + " F=" + std::to_string(cfg.feature_dim) + " N " +
                       std::to_string(cfg.min_resolution) + "->" + std::to_string(cfg.max_resolution);
        const std::vector<double> analytic = encoder_backward(pyramid, bundle, upstream);
        auto loss = [&] { return dot(encode_bundle(pyramid, bundle), upstream); };
        auto values = pyramid.values();
        for (std::size_t i = 0; i < values.size(); ++i)
            report.record("grid[" + std::to_string(i) + "]", analytic[i], central_difference(values[i], kStep, loss));
        return report;
    }

    GradReport check_decoder_gradient(std::uint64_t seed, DecoderMode mode) {
        Gen gen(seed);
        DecoderConfig cfg;
        cfg.depth = gen.coin() ? 2 : 4;
        cfg.width = gen.integer(2, 4);
        switch (gen.integer(0, 2)) {
        case 1: cfg.sr_modules.push_back({4, 2, 0}); break;
        case 2: cfg.sr_modules.push_back({3, 3, gen.integer(2, 3)}); break;
        default: break;
        }
        const int in = gen.integer(2, 5);
        const int n = gen.integer(1, 2);
        const int h = gen.integer(2, 3);
        const int w = gen.integer(2, 3);

        DecoderParams params = init_decoder(cfg, in, seed ^ 0x5bd1e995u);
        perturb_normalization(params, gen, mode != DecoderMode::train);
        FeatureMap features = gen.feature_map(n, h, w, in);
        const int up = cfg.upsample_product();
        const FeatureMap upstream = gen.feature_map(n, h * up, w * up, cfg.out_channels);

        GradReport report;
        report.label = std::string(mode == DecoderMode::train ? "decoder(train)" : "decoder(frozen)") +
                       " depth=" + std::to_string(cfg.depth) + " width=" + std::to_string(cfg.width) +
                       " sr=" + std::to_string(cfg.sr_modules.size()) + " in=" + std::to_string(in) +
                       " map=" + std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w);

        DecoderOutput out = decoder_forward(params, features, mode);
        const DecoderGradients g = decoder_backward(params, *out.tape, upstream);
        auto loss = [&] { return dot(decoder_forward(params, features, mode).image, upstream); };

        auto values = params.params.values();
        for (std::size_t i = 0; i < values.size(); ++i)
            report.record(slot_name(params.params, i), g.params[i], central_difference(values[i], kStep, loss));
        for (std::size_t i = 0; i < features.data.size(); ++i)
            report.record("input[" + std::to_string(i) + "]", g.input.data[i],
                          central_difference(features.data[i], kStep, loss));
        return report;
    }

    ModelSpec tiny_frontal_spec(int size, int downsample, EncoderKind kind) {
        ModelSpec spec;
        spec.camera = CameraModel::centered(size, size, size);
        spec.downsample = downsample;
        spec.parameterization = RayParameterization::ndc(spec.camera);
        std::vector<RayBundle> raw;
        for (const auto& p : frontal_poses())
            raw.push_back(parameterize_grid(generate_ray_bundle(spec.camera, p, downsample), spec.parameterization));
        spec.bounds = fit_coordinate_bounds(raw);
        spec.encoder_kind = kind;
        spec.encoder = {2, 2, 3, 6};
        spec.num_freqs = 2;
        spec.decoder.depth = 2;
        spec.decoder.width = 4;
        spec.decoder.sr_modules = default_sr_modules(downsample);
        return spec;
    }

    GradReport check_end_to_end_gradient(std::uint64_t seed) {
        Gen gen(seed);
        ModelSpec spec = tiny_frontal_spec(gen.coin() ? 8 : 6, 2);
        spec.decoder.width = gen.integer(3, 4);
        LightFieldModel model = make_model(spec, seed);
        model.pyramid = gen.pyramid(spec.encoder, 0.5);
        perturb_normalization(model.decoder, gen, false);

        Pose pose;
        pose.translation = gen.vec3(-0.3, 0.3);
        pose.translation.z() = 0.0;
        const RayBundle bundle = model_bundle(model, pose);
        FeatureMap target(1, spec.camera.height, spec.camera.width, 3);
        for (auto& v : target.data)
            v = gen.uniform();

        GradReport report;
        report.label = "end-to-end " + std::to_string(spec.camera.width) + "px width=" +
                       std::to_string(spec.decoder.width);

        const std::span<const RayBundle> one(&bundle, 1);
        DecoderOutput out = decoder_forward(model.decoder, encode_bundles(model.pyramid, one), DecoderMode::train);
        const LossResult l = mse_loss(out.image, target);
        const DecoderGradients g = decoder_backward(model.decoder, *out.tape, l.grad);
        std::vector<double> grid_grad(model.pyramid.parameter_count(), 0.0);
        accumulate_encoder_gradient(model.pyramid, bundle, g.input, 0, grid_grad);

        auto loss = [&] {
            return mse_loss(decoder_forward(model.decoder, encode_bundles(model.pyramid, one), DecoderMode::train).image,
                            target)
                .loss;
        };
        auto grid = model.pyramid.values();
        for (std::size_t i = 0; i < grid.size(); ++i)
            report.record("grid[" + std::to_string(i) + "]", grid_grad[i], central_difference(grid[i], kStep, loss));
        auto dec = model.decoder.params.values();
        for (std::size_t i = 0; i < dec.size(); ++i)
            report.record(slot_name(model.decoder.params, i), g.params[i], central_difference(dec[i], kStep, loss));
        return report;
    }

    TempDir::TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("lightslab_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }

    TempDir::~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

} // namespace lightslab::testing
