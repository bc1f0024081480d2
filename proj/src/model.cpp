/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/model.hpp"
#include "lightslab/errors.hpp"

namespace lightslab {

    int LightFieldModel::encoder_channels() const {
        return encoder_kind == EncoderKind::grid ? pyramid.config().channels() : frequency_channels(num_freqs);
    }

    void LightFieldModel::validate() const {
        camera.validate();
        if (downsample < 1)
            throw InvalidConfig("model: downsample must be >= 1");
        validate_bounds(bounds);
        if (encoder_kind == EncoderKind::frequency && num_freqs < 0)
            throw InvalidConfig("model: frequency count must be >= 0");
        decoder.config().validate();
        if (decoder.in_channels() != encoder_channels())
            throw InvalidConfig("model: encoder emits " + std::to_string(encoder_channels()) +
                                " channels but the decoder stem expects " + std::to_string(decoder.in_channels()));
        const int up = decoder.config().upsample_product();
        if (up != downsample || camera.width % downsample != 0 || camera.height % downsample != 0)
            throw InvalidConfig("model: downsample " + std::to_string(downsample) + " x SR product " +
                                std::to_string(up) + " does not reproduce the " + std::to_string(camera.width) +
                                "x" + std::to_string(camera.height) + " camera");
    }

    std::vector<SrStageConfig> default_sr_modules(int downsample) {
        if (downsample < 1)
            throw InvalidConfig("downsample must be >= 1");
        std::vector<SrStageConfig> stages;
        int rest = downsample;
        while (rest % 2 == 0) {
            stages.push_back({4, 2, 0});
            rest /= 2;
        }
        while (rest % 3 == 0) {
            stages.push_back({3, 3, 0});
            rest /= 3;
        }
        if (rest != 1)
            throw InvalidConfig("downsample " + std::to_string(downsample) + " is not a product of 2s and 3s");
        return stages;
    }

    namespace {
        LightFieldModel skeleton(const ModelSpec& spec) {
            LightFieldModel m;
            m.camera = spec.camera;
            m.downsample = spec.downsample;
            m.parameterization = spec.parameterization;
            m.bounds = spec.bounds;
            m.encoder_kind = spec.encoder_kind;
            m.num_freqs = spec.num_freqs;
            return m;
        }
    } // namespace

    LightFieldModel make_model(const ModelSpec& spec, std::uint64_t seed) {
        LightFieldModel m = skeleton(spec);
        if (spec.encoder_kind == EncoderKind::grid)
            m.pyramid = init_pyramid(spec.encoder, seed);
        m.decoder = init_decoder(spec.decoder, m.encoder_channels(), seed * 0x9E3779B97F4A7C15ull + 1);
        m.validate();
        return m;
    }

    LightFieldModel make_zero_model(const ModelSpec& spec) {
        LightFieldModel m = skeleton(spec);
        if (spec.encoder_kind == EncoderKind::grid) {
            spec.encoder.validate();
            m.pyramid = FeatureGridPyramid(spec.encoder);
        }
        m.decoder = DecoderParams(spec.decoder, m.encoder_channels());
        m.validate();
        return m;
    }

    RayBundle model_bundle(const LightFieldModel& model, const Pose& pose) {
        pose.validate();
        const RayGrid grid = generate_ray_bundle(model.camera, pose, model.downsample);
        return normalize_bundle(parameterize_grid(grid, model.parameterization), model.bounds);
    }

    FeatureMap encode_for_model(const LightFieldModel& model, std::span<const RayBundle> bundles) {
        if (model.encoder_kind == EncoderKind::grid)
            return encode_bundles(model.pyramid, bundles);
        return frequency_encode_bundles(bundles, model.num_freqs);
    }

    ImageBuffer render_model(const LightFieldModel& model, const Pose& pose) {
        const RayBundle bundle = model_bundle(model, pose);
        const FeatureMap features = encode_for_model(model, std::span<const RayBundle>(&bundle, 1));
        return image_from_map(decoder_forward_eval(model.decoder, features));
    }

    const CameraModel& SceneModel::camera() const {
        if (sub_models.empty())
            throw InvalidState("scene has no sub-models");
        return sub_models.front().camera;
    }

    void SceneModel::validate() const {
        if (static_cast<int>(sub_models.size()) != partition.subscene_count())
            throw InvalidConfig("scene: " + std::to_string(sub_models.size()) + " sub-models for " +
                                std::to_string(partition.subscene_count()) + " sub-scenes");
        for (const auto& m : sub_models) {
            m.validate();
            if (m.camera.width != camera().width || m.camera.height != camera().height)
                throw InvalidConfig("scene: sub-models disagree on output resolution");
        }
    }

    RenderResult render_view_routed(const SceneModel& scene, const Pose& pose) {
        pose.validate();
        const int id = route_query(scene.partition, pose);
        if (id < 0 || id >= static_cast<int>(scene.sub_models.size()))
            throw InvalidState("routing produced sub-scene " + std::to_string(id) + " with no model");
        return {render_model(scene.sub_models[static_cast<std::size_t>(id)], pose), id};
    }

    ImageBuffer render_view(const SceneModel& scene, const Pose& pose) { return render_view_routed(scene, pose).image; }

} // namespace lightslab
