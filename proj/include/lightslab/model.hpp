/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/decoder.hpp"
#include "lightslab/encoder.hpp"
#include "lightslab/geometry.hpp"
#include "lightslab/image.hpp"
#include "lightslab/partition.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lightslab {

    enum class EncoderKind { grid, frequency };

    /**
     * One neural light field: ray parameterization, coordinate bounds, encoder
     * and decoder for a single (sub-)scene.
     */
    struct LightFieldModel {
        CameraModel camera;
        int downsample = 1;
        RayParameterization parameterization;
        CoordBounds bounds;

        EncoderKind encoder_kind = EncoderKind::grid;
        FeatureGridPyramid pyramid;
        int num_freqs = 10; // frequency encoder only

        DecoderParams decoder;

        int encoder_channels() const;
        int bundle_height() const { return (camera.height + downsample - 1) / downsample; }
        int bundle_width() const { return (camera.width + downsample - 1) / downsample; }

        // Throws InvalidConfig when encoder/decoder/camera sizes disagree.
        void validate() const;
    };

    struct ModelSpec {
        CameraModel camera;
        int downsample = 1;
        RayParameterization parameterization;
        CoordBounds bounds;
        EncoderKind encoder_kind = EncoderKind::grid;
        EncoderConfig encoder;
        int num_freqs = 10;
        DecoderConfig decoder;
    };

    // Grid values from `seed`, decoder weights from a seed derived from it.
    LightFieldModel make_model(const ModelSpec& spec, std::uint64_t seed);
    // All-zero parameters; renders a uniform 0.5 image.
    LightFieldModel make_zero_model(const ModelSpec& spec);

    // SR stages whose factors multiply to `downsample`: x2 stages (k=4) and x3 stages (k=3).
    std::vector<SrStageConfig> default_sr_modules(int downsample);

    // Normalized low-resolution ray bundle for `pose`.
    RayBundle model_bundle(const LightFieldModel& model, const Pose& pose);
    FeatureMap encode_for_model(const LightFieldModel& model, std::span<const RayBundle> bundles);

    ImageBuffer render_model(const LightFieldModel& model, const Pose& pose);

    /// All sub-scene models plus the partition that routes queries between them.
    struct SceneModel {
        ScenePartition partition;
        std::vector<LightFieldModel> sub_models;

        const CameraModel& camera() const;
        void validate() const;
    };

    struct RenderResult {
        ImageBuffer image;
        int subscene = 0;
    };

    RenderResult render_view_routed(const SceneModel& scene, const Pose& pose);
    ImageBuffer render_view(const SceneModel& scene, const Pose& pose);

    // Single-file container; format documented in the README.
    void save_checkpoint(const SceneModel& scene, const std::filesystem::path& path);
    SceneModel load_checkpoint(const std::filesystem::path& path);
    std::vector<std::uint8_t> serialize_checkpoint(const SceneModel& scene);
    SceneModel deserialize_checkpoint(std::span<const std::uint8_t> bytes);

    inline constexpr char kCheckpointMagic[8] = {'L', 'S', 'L', 'A', 'B', 'C', 'K', 'P'};
    inline constexpr std::uint32_t kCheckpointVersion = 1;

} // namespace lightslab
