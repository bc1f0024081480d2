/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/dataset.hpp"
#include "lightslab/errors.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <numbers>

namespace lightslab {

    double focal_from_angle(double camera_angle_x, int width) {
        if (!(camera_angle_x > 0.0 && camera_angle_x < std::numbers::pi))
            throw InvalidArgument("camera_angle_x must lie in (0, pi)");
        return 0.5 * width / std::tan(0.5 * camera_angle_x);
    }

    SceneManifest parse_manifest(const nlohmann::json& j, const std::string& source) {
        SceneManifest m;
        try {
            m.camera_angle_x = j.at("camera_angle_x").get<double>();
            m.near = j.value("near", 1.0);
            const auto& frames = j.at("frames");
            if (!frames.is_array() || frames.empty())
                throw ParseError(source + ": 'frames' must be a non-empty array");
            for (std::size_t i = 0; i < frames.size(); ++i) {
                const auto& f = frames[i];
                const std::string label = source + ": frame " + std::to_string(i);
                if (!f.contains("file_path"))
                    throw ParseError(label + ": missing 'file_path'");
                if (!f.contains("transform_matrix"))
                    throw ParseError(label + " ('" + f["file_path"].get<std::string>() +
                                     "'): missing 'transform_matrix'");
                ManifestFrame frame;
                frame.file_path = f.at("file_path").get<std::string>();
                const auto& t = f.at("transform_matrix");
                if (!t.is_array() || t.size() != 4)
                    throw ParseError(label + " ('" + frame.file_path + "'): transform_matrix must be 4x4");
                std::array<double, 16> flat{};
                for (std::size_t r = 0; r < 4; ++r) {
                    if (!t[r].is_array() || t[r].size() != 4)
                        throw ParseError(label + " ('" + frame.file_path + "'): transform_matrix must be 4x4");
                    for (std::size_t c = 0; c < 4; ++c)
                        flat[r * 4 + c] = t[r][c].get<double>();
                }
                frame.pose = Pose::from_row_major(flat);
                if (!frame.pose.is_valid(1e-3))
                    throw ParseError(label + " ('" + frame.file_path + "'): rotation block is not orthonormal");
                m.frames.push_back(std::move(frame));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source + ": " + e.what());
        }
        if (!(m.camera_angle_x > 0.0 && m.camera_angle_x < std::numbers::pi))
            throw ParseError(source + ": camera_angle_x must lie in (0, pi)");
        if (!(m.near > 0.0))
            throw ParseError(source + ": near must be > 0");
        return m;
    }

    SceneManifest load_manifest(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in)
            throw ParseError("cannot open manifest " + path.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        return parse_manifest(j, path.string());
    }

    nlohmann::json manifest_to_json(const SceneManifest& manifest) {
        nlohmann::json j;
        j["camera_angle_x"] = manifest.camera_angle_x;
        j["near"] = manifest.near;
        auto frames = nlohmann::json::array();
        for (const auto& f : manifest.frames) {
            const auto m = f.pose.to_row_major();
            nlohmann::json rows = nlohmann::json::array();
            for (int r = 0; r < 4; ++r)
                rows.push_back({m[static_cast<std::size_t>(r * 4)], m[static_cast<std::size_t>(r * 4 + 1)],
                                m[static_cast<std::size_t>(r * 4 + 2)], m[static_cast<std::size_t>(r * 4 + 3)]});
            frames.push_back({{"file_path", f.file_path}, {"transform_matrix", rows}});
        }
        j["frames"] = frames;
        return j;
    }

    void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path) {
        std::ofstream out(path);
        if (!out)
            throw ParseError("cannot write manifest " + path.string());
        out << manifest_to_json(manifest).dump(2) << '\n';
    }

    namespace {
        std::filesystem::path resolve_frame(const std::filesystem::path& dir, const std::string& file_path) {
            std::filesystem::path p = dir / file_path;
            if (!p.has_extension())
                p += ".png";
            return p.lexically_normal();
        }
    } // namespace

    SceneData load_scene(const std::filesystem::path& dir, int downsample) {
        if (downsample < 1)
            throw InvalidArgument("load_scene: downsample must be >= 1");
        SceneData scene;
        scene.manifest = load_manifest(dir / "transforms.json");
        for (const auto& f : scene.manifest.frames) {
            TrainSample s;
            s.pose = f.pose;
            s.name = f.file_path;
            s.target = load_image(resolve_frame(dir, f.file_path));
            if (!scene.samples.empty() && !s.target.same_shape(scene.samples.front().target))
                throw ParseError("frame '" + f.file_path + "' is " + std::to_string(s.target.width) + "x" +
                                 std::to_string(s.target.height) + ", expected " +
                                 std::to_string(scene.samples.front().target.width) + "x" +
                                 std::to_string(scene.samples.front().target.height));
            scene.samples.push_back(std::move(s));
        }
        const int w = scene.samples.front().target.width;
        const int h = scene.samples.front().target.height;
        if (w % downsample != 0 || h % downsample != 0)
            throw ParseError("image size " + std::to_string(w) + "x" + std::to_string(h) +
                             " is not divisible by downsample " + std::to_string(downsample));
        scene.camera = CameraModel::centered(w, h, focal_from_angle(scene.manifest.camera_angle_x, w),
                                             scene.manifest.near);
        return scene;
    }

    double synth_color(const SynthSpec& spec, const Ray4& r, int channel) {
        return 0.5 + 0.5 * std::sin(spec.a * r.x + spec.b * r.u + spec.phase[static_cast<std::size_t>(channel)]);
    }

    namespace {
        template <class ColorFn>
        std::vector<TrainSample> render_analytic(const CameraModel& camera, std::span<const Pose> poses, ColorFn&& color) {
            std::vector<TrainSample> out;
            out.reserve(poses.size());
            for (std::size_t i = 0; i < poses.size(); ++i) {
                poses[i].validate();
                const RayGrid grid = generate_ray_bundle(camera, poses[i], 1);
                TrainSample s;
                s.pose = poses[i];
                s.name = "r_" + std::to_string(i);
                s.target = ImageBuffer(camera.width, camera.height);
                for (int y = 0; y < grid.rows; ++y)
                    for (int x = 0; x < grid.cols; ++x)
                        color(grid.at(y, x), s.target, y, x);
                out.push_back(std::move(s));
            }
            return out;
        }
    } // namespace

    std::vector<TrainSample> synth_lightfield(const SynthSpec& spec, const CameraModel& camera,
                                              std::span<const Pose> poses, const RayParameterization& param) {
        return render_analytic(camera, poses, [&](const Ray3& ray, ImageBuffer& img, int y, int x) {
            const Ray4 r = param(ray);
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = synth_color(spec, r, c);
        });
    }

    std::vector<TrainSample> synth_orbit_lightfield(const SynthSpec& spec, const CameraModel& camera,
                                                    std::span<const Pose> poses) {
        return render_analytic(camera, poses, [&](const Ray3& ray, ImageBuffer& img, int y, int x) {
            const Vec3 d = ray.direction.normalized();
            const Vec3 moment = ray.origin.cross(d);
            const Ray4 r{moment.x(), d.y(), d.z(), moment.z()};
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = synth_color(spec, r, c);
        });
    }

    Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
        const Vec3 back = (eye - target).normalized();
        Vec3 right = up.cross(back);
        if (right.norm() < 1e-9)
            right = Vec3::UnitX().cross(back);
        right.normalize();
        Pose p;
        p.rotation.col(0) = right;
        p.rotation.col(1) = back.cross(right);
        p.rotation.col(2) = back;
        p.translation = eye;
        return p;
    }

    std::vector<Pose> frontal_poses() {
        std::vector<Pose> poses;
        for (int iy = 0; iy < 4; ++iy)
            for (int ix = 0; ix < 4; ++ix) {
                Pose p;
                p.translation = Vec3(-0.3 + 0.2 * ix, -0.3 + 0.2 * iy, 0.0);
                poses.push_back(p);
            }
        return poses;
    }

    Pose frontal_holdout_pose() {
        Pose p;
        p.translation = Vec3(0.05, -0.05, 0.0);
        return p;
    }

    std::vector<Pose> orbit_poses(double radius) {
        std::vector<Pose> poses;
        const double elevations[] = {0.25, 0.7, 1.15};
        for (double e : elevations)
            for (int k = 0; k < 8; ++k) {
                const double a = 2.0 * std::numbers::pi * k / 8.0;
                const Vec3 eye = radius * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
                poses.push_back(look_at(eye, Vec3::Zero(), Vec3::UnitZ()));
            }
        poses.push_back(look_at(Vec3(0.0, 0.0, radius), Vec3::Zero(), Vec3::UnitY()));
        return poses;
    }

    SynthScene make_synth_scene(SynthLayout layout, int size) {
        if (size < 2)
            throw InvalidArgument("make_synth_scene: size must be >= 2");
        SynthScene scene;
        scene.camera = CameraModel::centered(size, size, static_cast<double>(size), 1.0);
        const SynthSpec spec;
        if (layout == SynthLayout::frontal) {
            const auto poses = frontal_poses();
            const auto param = RayParameterization::ndc(scene.camera);
            scene.train = synth_lightfield(spec, scene.camera, poses, param);
            const Pose held = frontal_holdout_pose();
            scene.holdout = synth_lightfield(spec, scene.camera, std::span<const Pose>(&held, 1), param);
            scene.holdout.front().name = "holdout_0";
        } else {
            const auto poses = orbit_poses();
            scene.train = synth_orbit_lightfield(spec, scene.camera, poses);
        }
        scene.manifest.camera_angle_x = 2.0 * std::atan(0.5 * size / scene.camera.focal_x);
        scene.manifest.near = scene.camera.near;
        for (const auto& s : scene.train)
            scene.manifest.frames.push_back({"images/" + s.name + ".png", s.pose});
        return scene;
    }

    void write_scene(const SynthScene& scene, const std::filesystem::path& dir) {
        std::filesystem::create_directories(dir / "images");
        for (std::size_t i = 0; i < scene.train.size(); ++i)
            save_image(scene.train[i].target, dir / scene.manifest.frames[i].file_path);
        save_manifest(scene.manifest, dir / "transforms.json");
    }

} // namespace lightslab
