/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace lightslab {

    using Vec3 = Eigen::Vector3d;
    using Mat3 = Eigen::Matrix3d;

    /**
     * Pinhole intrinsics. Cameras follow the OpenGL convention used by common
     * synthetic-scene manifests: +x right, +y up, looking down -z.
     */
    struct CameraModel {
        int width = 1;
        int height = 1;
        double focal_x = 1.0;
        double focal_y = 1.0;
        double principal_x = 0.5;
        double principal_y = 0.5;
        double near = 1.0;

        // Principal point at the image center, square pixels.
        static CameraModel centered(int width, int height, double focal, double near = 1.0);

        // Throws InvalidArgument when an invariant is violated.
        void validate() const;
    };

    /// Camera-to-world rigid transform.
    struct Pose {
        Mat3 rotation = Mat3::Identity();
        Vec3 translation = Vec3::Zero();

        static Pose identity() { return {}; }
        // 16 numbers, row-major 4x4 camera-to-world; the last row is ignored.
        static Pose from_row_major(std::span<const double> m16);
        std::array<double, 16> to_row_major() const;

        // Viewing direction in world space (rotation applied to -z).
        Vec3 forward() const { return -rotation.col(2); }

        bool is_valid(double tol = 1e-5) const;
        void validate(double tol = 1e-5) const;
    };

    struct Ray3 {
        Vec3 origin = Vec3::Zero();
        Vec3 direction = Vec3::UnitZ();
    };

    /// Two-plane ray coordinates: (x, y) on the near plane, (u, v) on the far plane.
    struct Ray4 {
        double x = 0.0;
        double y = 0.0;
        double u = 0.0;
        double v = 0.0;

        double operator[](int axis) const {
            switch (axis) {
            case 0: return x;
            case 1: return y;
            case 2: return u;
            default: return v;
            }
        }
        double& operator[](int axis) {
            switch (axis) {
            case 0: return x;
            case 1: return y;
            case 2: return u;
            default: return v;
            }
        }
    };

    /// World -> slab rigid transform: p_slab = rotation * p_world + translation.
    struct RigidTransform {
        Mat3 rotation = Mat3::Identity();
        Vec3 translation = Vec3::Zero();

        Vec3 apply_point(const Vec3& p) const { return rotation * p + translation; }
        Vec3 apply_vector(const Vec3& d) const { return rotation * d; }
    };

    struct SlabPlanes {
        RigidTransform frame;
        double z_near = -1.0;
        double z_far = 1.0;
    };

    /// Row-major grid of world-space rays, one per (downsampled) pixel.
    struct RayGrid {
        int rows = 0;
        int cols = 0;
        std::vector<Ray3> rays;

        const Ray3& at(int r, int c) const { return rays[static_cast<std::size_t>(r) * cols + c]; }
    };

    /// Row-major grid of two-plane rays (raw or normalized to the unit cube).
    struct RayBundle {
        int h_l = 0;
        int w_l = 0;
        std::vector<Ray4> rays;

        std::size_t size() const { return rays.size(); }
        const Ray4& at(int r, int c) const { return rays[static_cast<std::size_t>(r) * w_l + c]; }
    };

    struct AxisBounds {
        double lo = 0.0;
        double hi = 1.0;
    };
    using CoordBounds = std::array<AxisBounds, 4>;

    // Rays through every `downsample`-th full-resolution pixel center.
    // Bundle shape is ceil(height / d) x ceil(width / d).
    RayGrid generate_ray_bundle(const CameraModel& camera, const Pose& pose, int downsample);

    // Forward-facing NDC warp: the plane at depth `near` maps to z = -1 and
    // infinity to z = +1. The returned origin lies on the near plane.
    Ray3 world_to_ndc(const Ray3& ray, const CameraModel& camera);

    // NDC depth of a camera-frame point at distance `depth` in front of the camera.
    double ndc_depth(double depth, double near);

    Ray3 to_slab_frame(const Ray3& ray, const RigidTransform& frame);

    // Intersections with z = z_near and z = z_far; the ray must already be in slab space.
    Ray4 two_plane_parameterize(const Ray3& ray, const SlabPlanes& slab);

    // Affine map [lo, hi] -> [0, 1] per axis, clamped.
    Ray4 normalize_ray_coords(const Ray4& r, const CoordBounds& bounds);

    /**
     * How a sub-scene turns world rays into slab coordinates. Frontal scenes go
     * through NDC and use the NDC near/far planes; non-frontal sub-scenes use a
     * rigid slab frame placed on their partition face.
     */
    struct RayParameterization {
        enum class Kind { ndc, slab };

        Kind kind = Kind::ndc;
        SlabPlanes slab;
        CameraModel ndc_camera;

        static RayParameterization ndc(const CameraModel& camera);
        static RayParameterization rigid(const SlabPlanes& slab);

        Ray4 operator()(const Ray3& world_ray) const;
    };

    // Throws DegenerateRay listing offending pixel indices.
    RayBundle parameterize_grid(const RayGrid& grid, const RayParameterization& param);

    RayBundle normalize_bundle(const RayBundle& bundle, const CoordBounds& bounds);

    // Per-axis min/max over all rays, widened by `margin` of the range on each side.
    CoordBounds fit_coordinate_bounds(std::span<const RayBundle> bundles, double margin = 0.05);

    void validate_bounds(const CoordBounds& bounds);

} // namespace lightslab
