/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/geometry.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lightslab {

    using Feature6 = Eigen::Matrix<double, 6, 1>;

    /**
     * Five half-spaces over camera positions: a camera belongs to face i when
     * row_i . p >= plane_offset * radius. Row 0 is the top face, rows 1-4 the
     * +x, -x, +y, -y sides.
     */
    struct PrismPartition {
        double radius = 1.0;
        double plane_offset = 1.0;

        static const std::array<Vec3, 5>& rows();
        void validate() const;
    };

    std::vector<int> assign_pose_prism(const PrismPartition& partition, const Vec3& position);
    // argmax_i row_i . p, lowest index on ties.
    int route_prism(const PrismPartition& partition, const Vec3& position);

    /// k-means over [position / max |position|; forward].
    struct ClusterPartition {
        int k = 1;
        std::vector<Feature6> centroids;
        double overlap_margin = 0.1;
        double position_scale = 1.0; // 1 / max |position| of the fitted poses

        void validate() const;
    };

    Feature6 pose_feature(const Pose& pose, double position_scale);

    ClusterPartition fit_kmeans_partition(std::span<const Pose> poses, int k, double overlap_margin,
                                          std::uint64_t seed);
    // Nearest centroid plus every centroid within (1 + margin) of the nearest distance.
    std::vector<int> assign_pose_kmeans(const ClusterPartition& partition, const Pose& pose);
    int route_kmeans(const ClusterPartition& partition, const Pose& pose);

    enum class PartitionKind { frontal, prism, kmeans };

    const char* partition_kind_name(PartitionKind kind);
    PartitionKind parse_partition_kind(const std::string& name);

    struct ScenePartition {
        PartitionKind kind = PartitionKind::frontal;
        PrismPartition prism;
        ClusterPartition clusters;

        int subscene_count() const;
    };

    int route_query(const ScenePartition& partition, const Pose& pose);
    std::vector<int> assign_pose(const ScenePartition& partition, const Pose& pose);

    /// Sub-scene ids per pose, and pose indices per sub-scene.
    struct Assignment {
        std::vector<std::vector<int>> pose_subscenes;
        std::vector<std::vector<int>> subscene_poses;
    };
    // Throws UncoveredPose naming the first pose that lands in no sub-scene.
    Assignment assign_poses(const ScenePartition& partition, std::span<const Pose> poses);

    // Median camera distance from the origin.
    double estimate_radius(std::span<const Pose> poses);

    // Frame whose +z axis is `axis`; x and y complete a right-handed basis.
    RigidTransform frame_from_axis(const Vec3& axis);

    // Rigid slab for a non-frontal sub-scene. Planes at +0.9 r and -1.1 r along the face normal.
    SlabPlanes subscene_slab(const ScenePartition& partition, int subscene,
                             std::span<const Pose> assigned_poses);

    nlohmann::json partition_to_json(const ScenePartition& partition);
    ScenePartition partition_from_json(const nlohmann::json& j);

    // Human-readable manifest: per sub-scene id, its hyperplane or centroid and assigned frame names.
    nlohmann::json partition_manifest(const ScenePartition& partition, const Assignment& assignment,
                                      std::span<const std::string> frame_names);

} // namespace lightslab
