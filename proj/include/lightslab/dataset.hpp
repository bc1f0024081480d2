/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/geometry.hpp"
#include "lightslab/trainer.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lightslab {

    struct ManifestFrame {
        std::string file_path;
        Pose pose;
    };

    /**
     * `transforms.json`: camera_angle_x (radians) and frames with file_path and
     * a 4x4 camera-to-world transform_matrix. Optional keys: "near" (NDC near
     * plane, default 1) and "layout".
     */
    struct SceneManifest {
        double camera_angle_x = 0.0;
        double near = 1.0;
        std::vector<ManifestFrame> frames;
    };

    double focal_from_angle(double camera_angle_x, int width);

    SceneManifest parse_manifest(const nlohmann::json& j, const std::string& source = "manifest");
    SceneManifest load_manifest(const std::filesystem::path& path);
    nlohmann::json manifest_to_json(const SceneManifest& manifest);
    void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path);

    struct SceneData {
        SceneManifest manifest;
        CameraModel camera;
        std::vector<TrainSample> samples;
    };

    // Loads `dir/transforms.json` and every frame image; all images must share one size
    // that the downsample factor divides.
    SceneData load_scene(const std::filesystem::path& dir, int downsample = 1);

    /// Parameters of the analytic light field c = 0.5 + 0.5 sin(a x + b u + phase_c).
    struct SynthSpec {
        double a = 3.0;
        double b = 2.0;
        std::array<double, 3> phase{0.0, 2.0, 4.0};
    };

    double synth_color(const SynthSpec& spec, const Ray4& r, int channel);

    // One full-resolution sample per pose; each pixel's color is the analytic function of the
    // two-plane coordinates that `param` assigns to its ray.
    std::vector<TrainSample> synth_lightfield(const SynthSpec& spec, const CameraModel& camera,
                                              std::span<const Pose> poses, const RayParameterization& param);

    // 360-degree variant: color from the ray's direction and moment, so any pose sees a valid field.
    std::vector<TrainSample> synth_orbit_lightfield(const SynthSpec& spec, const CameraModel& camera,
                                                    std::span<const Pose> poses);

    enum class SynthLayout { frontal, orbit };

    struct SynthScene {
        CameraModel camera;
        std::vector<TrainSample> train;
        std::vector<TrainSample> holdout;
        SceneManifest manifest;
    };

    // Frontal: 64x64 camera, 16 poses on a 4x4 translation grid in [-0.3, 0.3]^2 facing -z,
    // plus one interior holdout pose. Orbit: cameras on the upper hemisphere of radius 4
    // looking at the origin.
    SynthScene make_synth_scene(SynthLayout layout, int size = 64);
    std::vector<Pose> frontal_poses();
    Pose frontal_holdout_pose();
    std::vector<Pose> orbit_poses(double radius = 4.0);
    Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY());

    // Writes transforms.json and images/*.png.
    void write_scene(const SynthScene& scene, const std::filesystem::path& dir);

} // namespace lightslab
