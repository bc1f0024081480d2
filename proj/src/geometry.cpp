/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/geometry.hpp"
#include "lightslab/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace lightslab {

    namespace {
        constexpr double kParallelEps = 1e-12;
        // Cap on how many pixel indices a degenerate-ray diagnostic lists.
        constexpr std::size_t kMaxReportedPixels = 16;
    } // namespace

    CameraModel CameraModel::centered(int width, int height, double focal, double near) {
        CameraModel cam;
        cam.width = width;
        cam.height = height;
        cam.focal_x = focal;
        cam.focal_y = focal;
        cam.principal_x = 0.5 * width;
        cam.principal_y = 0.5 * height;
        cam.near = near;
        return cam;
    }

    void CameraModel::validate() const {
        if (width < 1 || height < 1)
            throw InvalidArgument("camera: width and height must be >= 1");
        if (!(focal_x > 0.0) || !(focal_y > 0.0))
            throw InvalidArgument("camera: focal lengths must be > 0");
        if (!(near > 0.0))
            throw InvalidArgument("camera: near must be > 0");
    }

    Pose Pose::from_row_major(std::span<const double> m16) {
        if (m16.size() != 16)
            throw InvalidArgument("pose: expected 16 numbers, got " + std::to_string(m16.size()));
        Pose p;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c)
                p.rotation(r, c) = m16[static_cast<std::size_t>(r * 4 + c)];
            p.translation[r] = m16[static_cast<std::size_t>(r * 4 + 3)];
        }
        return p;
    }

    std::array<double, 16> Pose::to_row_major() const {
        std::array<double, 16> m{};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c)
                m[static_cast<std::size_t>(r * 4 + c)] = rotation(r, c);
            m[static_cast<std::size_t>(r * 4 + 3)] = translation[r];
        }
        m[15] = 1.0;
        return m;
    }

    bool Pose::is_valid(double tol) const {
        if (!rotation.allFinite() || !translation.allFinite())
            return false;
        const Mat3 gram = rotation.transpose() * rotation;
        if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
            return false;
        return std::abs(rotation.determinant() - 1.0) <= tol;
    }

    void Pose::validate(double tol) const {
        if (!is_valid(tol))
            throw InvalidArgument("pose: rotation is not orthonormal with det +1");
    }

    RayGrid generate_ray_bundle(const CameraModel& camera, const Pose& pose, int downsample) {
        if (downsample <= 0)
            throw InvalidArgument("generate_ray_bundle: downsample must be positive");
        camera.validate();

        RayGrid grid;
        grid.rows = (camera.height + downsample - 1) / downsample;
        grid.cols = (camera.width + downsample - 1) / downsample;
        grid.rays.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
        for (int r = 0; r < grid.rows; ++r) {
            const double py = r * downsample + 0.5;
            for (int c = 0; c < grid.cols; ++c) {
                const double px = c * downsample + 0.5;
                const Vec3 cam_dir((px - camera.principal_x) / camera.focal_x,
                                   -(py - camera.principal_y) / camera.focal_y,
                                   -1.0);
                grid.rays.push_back({pose.translation, pose.rotation * cam_dir});
            }
        }
        return grid;
    }

    Ray3 world_to_ndc(const Ray3& ray, const CameraModel& camera) {
        const Vec3& d = ray.direction;
        if (std::abs(d.z()) < kParallelEps)
            throw DegenerateRay("world_to_ndc: ray is parallel to the image plane");

        const double near = camera.near;
        const double t = -(near + ray.origin.z()) / d.z();
        const Vec3 o = ray.origin + t * d;

        const double sx = -camera.focal_x / (0.5 * camera.width);
        const double sy = -camera.focal_y / (0.5 * camera.height);

        Ray3 out;
        out.origin = Vec3(sx * o.x() / o.z(), sy * o.y() / o.z(), 1.0 + 2.0 * near / o.z());
        out.direction = Vec3(sx * (d.x() / d.z() - o.x() / o.z()),
                             sy * (d.y() / d.z() - o.y() / o.z()),
                             -2.0 * near / o.z());
        return out;
    }

    double ndc_depth(double depth, double near) { return 1.0 - 2.0 * near / depth; }

    Ray3 to_slab_frame(const Ray3& ray, const RigidTransform& frame) {
        return {frame.apply_point(ray.origin), frame.apply_vector(ray.direction)};
    }

    Ray4 two_plane_parameterize(const Ray3& ray, const SlabPlanes& slab) {
        const Vec3& o = ray.origin;
        const Vec3& d = ray.direction;
        if (std::abs(d.z()) < kParallelEps)
            throw DegenerateRay("two_plane_parameterize: ray is parallel to the slab planes");
        const double t_near = (slab.z_near - o.z()) / d.z();
        const double t_far = (slab.z_far - o.z()) / d.z();
        return {o.x() + t_near * d.x(), o.y() + t_near * d.y(), o.x() + t_far * d.x(), o.y() + t_far * d.y()};
    }

    void validate_bounds(const CoordBounds& bounds) {
        for (int a = 0; a < 4; ++a) {
            const auto& b = bounds[static_cast<std::size_t>(a)];
            if (!(b.hi > b.lo) || !std::isfinite(b.lo) || !std::isfinite(b.hi))
                throw InvalidArgument("invalid bounds on axis " + std::to_string(a) + ": need hi > lo");
        }
    }

    Ray4 normalize_ray_coords(const Ray4& r, const CoordBounds& bounds) {
        validate_bounds(bounds);
        Ray4 out;
        for (int a = 0; a < 4; ++a) {
            const auto& b = bounds[static_cast<std::size_t>(a)];
            out[a] = std::clamp((r[a] - b.lo) / (b.hi - b.lo), 0.0, 1.0);
        }
        return out;
    }

    RayParameterization RayParameterization::ndc(const CameraModel& camera) {
        RayParameterization p;
        p.kind = Kind::ndc;
        p.slab = SlabPlanes{RigidTransform{}, -1.0, 1.0};
        p.ndc_camera = camera;
        return p;
    }

    RayParameterization RayParameterization::rigid(const SlabPlanes& slab) {
        RayParameterization p;
        p.kind = Kind::slab;
        p.slab = slab;
        return p;
    }

    Ray4 RayParameterization::operator()(const Ray3& world_ray) const {
        if (kind == Kind::ndc)
            return two_plane_parameterize(world_to_ndc(world_ray, ndc_camera), slab);
        return two_plane_parameterize(to_slab_frame(world_ray, slab.frame), slab);
    }

    RayBundle parameterize_grid(const RayGrid& grid, const RayParameterization& param) {
        RayBundle bundle;
        bundle.h_l = grid.rows;
        bundle.w_l = grid.cols;
        bundle.rays.resize(grid.rays.size());

        std::vector<std::size_t> bad;
        for (std::size_t i = 0; i < grid.rays.size(); ++i) {
            try {
                bundle.rays[i] = param(grid.rays[i]);
                const Ray4& r = bundle.rays[i];
                if (!std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.u) || !std::isfinite(r.v))
                    bad.push_back(i);
            } catch (const DegenerateRay&) {
                bad.push_back(i);
            }
        }
        if (!bad.empty()) {
            std::ostringstream msg;
            msg << bad.size() << " degenerate ray(s) at pixel (row, col):";
            for (std::size_t k = 0; k < std::min(bad.size(), kMaxReportedPixels); ++k)
                msg << " (" << bad[k] / static_cast<std::size_t>(grid.cols) << ", "
                    << bad[k] % static_cast<std::size_t>(grid.cols) << ")";
            if (bad.size() > kMaxReportedPixels)
                msg << " ...";
            throw DegenerateRay(msg.str());
        }
        return bundle;
    }

    RayBundle normalize_bundle(const RayBundle& bundle, const CoordBounds& bounds) {
        validate_bounds(bounds);
        RayBundle out;
        out.h_l = bundle.h_l;
        out.w_l = bundle.w_l;
        out.rays.reserve(bundle.rays.size());
        for (const auto& r : bundle.rays)
            out.rays.push_back(normalize_ray_coords(r, bounds));
        return out;
    }

    CoordBounds fit_coordinate_bounds(std::span<const RayBundle> bundles, double margin) {
        CoordBounds b;
        for (auto& axis : b) {
            axis.lo = std::numeric_limits<double>::infinity();
            axis.hi = -std::numeric_limits<double>::infinity();
        }
        for (const auto& bundle : bundles) {
            for (const auto& r : bundle.rays) {
                for (int a = 0; a < 4; ++a) {
                    auto& axis = b[static_cast<std::size_t>(a)];
                    axis.lo = std::min(axis.lo, r[a]);
                    axis.hi = std::max(axis.hi, r[a]);
                }
            }
        }
        for (auto& axis : b) {
            if (!std::isfinite(axis.lo))
                throw InvalidArgument("fit_coordinate_bounds: no rays");
            double span = axis.hi - axis.lo;
            // Every ray shares this coordinate; give the axis a unit-width extent.
            if (span <= 0.0)
                span = 1.0;
            axis.lo -= margin * span;
            axis.hi += margin * span;
        }
        return b;
    }

} // namespace lightslab
