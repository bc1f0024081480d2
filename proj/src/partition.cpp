/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/partition.hpp"
#include "lightslab/errors.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace lightslab {

    namespace {

        constexpr double kSqrt2 = 1.41421356237309504880;

        double unit_double(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

        double inclusion_slack(double rhs) { return 1e-9 * std::max(1.0, std::abs(rhs)); }

    } // namespace

    // ---------------------------------------------------------------------------------------------
    // Prism

    const std::array<Vec3, 5>& PrismPartition::rows() {
        static const std::array<Vec3, 5> kRows{
            Vec3(0.0, 0.0, kSqrt2),
            Vec3(kSqrt2, 0.0, kSqrt2 - 1.0),
            Vec3(-kSqrt2, 0.0, kSqrt2 - 1.0),
            Vec3(0.0, kSqrt2, kSqrt2 - 1.0),
            Vec3(0.0, -kSqrt2, kSqrt2 - 1.0),
        };
        return kRows;
    }

    void PrismPartition::validate() const {
        if (!(radius > 0.0) || !std::isfinite(radius))
            throw InvalidArgument("prism partition: radius must be positive and finite");
        if (!(plane_offset > 0.0) || !std::isfinite(plane_offset))
            throw InvalidArgument("prism partition: plane offset must be positive and finite");
    }

    std::vector<int> assign_pose_prism(const PrismPartition& partition, const Vec3& position) {
        partition.validate();
        if (!position.allFinite())
            throw InvalidArgument("assign_pose_prism: position is not finite");
        const double rhs = partition.plane_offset * partition.radius;
        std::vector<int> ids;
        for (int i = 0; i < 5; ++i)
            if (PrismPartition::rows()[static_cast<std::size_t>(i)].dot(position) >= rhs - inclusion_slack(rhs))
                ids.push_back(i);
        if (ids.empty())
            throw UncoveredPose("camera position (" + std::to_string(position.x()) + ", " +
                                std::to_string(position.y()) + ", " + std::to_string(position.z()) +
                                ") lies in no prism face");
        return ids;
    }

    int route_prism(const PrismPartition&, const Vec3& position) {
        int best = 0;
        double best_value = PrismPartition::rows()[0].dot(position);
        for (int i = 1; i < 5; ++i) {
            const double v = PrismPartition::rows()[static_cast<std::size_t>(i)].dot(position);
            if (v > best_value) {
                best = i;
                best_value = v;
            }
        }
        return best;
    }

    // ---------------------------------------------------------------------------------------------
    // k-means

    void ClusterPartition::validate() const {
        if (k < 1 || static_cast<int>(centroids.size()) != k)
            throw InvalidArgument("cluster partition: k must be >= 1 and match the centroid count");
        if (!(overlap_margin >= 0.0))
            throw InvalidArgument("cluster partition: overlap margin must be >= 0");
        for (const auto& c : centroids)
            if (!c.allFinite())
                throw InvalidArgument("cluster partition: non-finite centroid");
    }

    Feature6 pose_feature(const Pose& pose, double position_scale) {
        Feature6 f;
        f.head<3>() = pose.translation * position_scale;
        f.tail<3>() = pose.forward().normalized();
        return f;
    }

    ClusterPartition fit_kmeans_partition(std::span<const Pose> poses, int k, double overlap_margin,
                                          std::uint64_t seed) {
        const int n = static_cast<int>(poses.size());
        if (k < 1)
            throw InvalidArgument("fit_kmeans_partition: k must be >= 1");
        if (k > n)
            throw InvalidArgument("fit_kmeans_partition: k = " + std::to_string(k) + " exceeds pose count " +
                                  std::to_string(n));
        if (!(overlap_margin >= 0.0))
            throw InvalidArgument("fit_kmeans_partition: overlap margin must be >= 0");

        double max_norm = 0.0;
        for (const auto& p : poses)
            max_norm = std::max(max_norm, p.translation.norm());
        ClusterPartition out;
        out.k = k;
        out.overlap_margin = overlap_margin;
        out.position_scale = max_norm > 0.0 ? 1.0 / max_norm : 1.0;

        // Sorted features make the result independent of input order.
        std::vector<Feature6> pts;
        pts.reserve(poses.size());
        for (const auto& p : poses)
            pts.push_back(pose_feature(p, out.position_scale));
        std::sort(pts.begin(), pts.end(), [](const Feature6& a, const Feature6& b) {
            return std::lexicographical_compare(a.data(), a.data() + 6, b.data(), b.data() + 6);
        });

        std::mt19937_64 rng(seed);
        std::vector<Feature6> centroids;
        centroids.push_back(pts[static_cast<std::size_t>(unit_double(rng) * n) % static_cast<std::size_t>(n)]);
        std::vector<double> d2(static_cast<std::size_t>(n));
        while (static_cast<int>(centroids.size()) < k) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& c : centroids)
                    best = std::min(best, (pts[static_cast<std::size_t>(i)] - c).squaredNorm());
                d2[static_cast<std::size_t>(i)] = best;
                total += best;
            }
            int pick = n - 1;
            if (total > 0.0) {
                const double target = unit_double(rng) * total;
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    acc += d2[static_cast<std::size_t>(i)];
                    if (acc > target) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<int>(unit_double(rng) * n) % n;
            }
            centroids.push_back(pts[static_cast<std::size_t>(pick)]);
        }

        std::vector<int> label(static_cast<std::size_t>(n), 0);
        for (int iter = 0; iter < 100; ++iter) {
            for (int i = 0; i < n; ++i) {
                int best = 0;
                double best_d = (pts[static_cast<std::size_t>(i)] - centroids[0]).squaredNorm();
                for (int c = 1; c < k; ++c) {
                    const double d = (pts[static_cast<std::size_t>(i)] - centroids[static_cast<std::size_t>(c)]).squaredNorm();
                    if (d < best_d) {
                        best = c;
                        best_d = d;
                    }
                }
                label[static_cast<std::size_t>(i)] = best;
            }
            std::vector<Feature6> next(static_cast<std::size_t>(k), Feature6::Zero());
            std::vector<int> count(static_cast<std::size_t>(k), 0);
            for (int i = 0; i < n; ++i) {
                next[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])] += pts[static_cast<std::size_t>(i)];
                ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
            }
            for (int c = 0; c < k; ++c) {
                if (count[static_cast<std::size_t>(c)] > 0) {
                    next[static_cast<std::size_t>(c)] /= count[static_cast<std::size_t>(c)];
                    continue;
                }
                // Empty cluster: re-seed at the point farthest from its current centroid.
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d =
                        (pts[static_cast<std::size_t>(i)] - centroids[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])])
                            .squaredNorm();
                    if (d > far_d) {
                        far = i;
                        far_d = d;
                    }
                }
                next[static_cast<std::size_t>(c)] = pts[static_cast<std::size_t>(far)];
            }
            double movement = 0.0;
            for (int c = 0; c < k; ++c)
                movement = std::max(movement, (next[static_cast<std::size_t>(c)] - centroids[static_cast<std::size_t>(c)]).norm());
            centroids = std::move(next);
            if (movement < 1e-6)
                break;
        }
        out.centroids = std::move(centroids);
        return out;
    }

    namespace {
        std::vector<double> centroid_distances(const ClusterPartition& partition, const Pose& pose) {
            const Feature6 f = pose_feature(pose, partition.position_scale);
            std::vector<double> d;
            d.reserve(partition.centroids.size());
            for (const auto& c : partition.centroids)
                d.push_back((f - c).norm());
            return d;
        }
    } // namespace

    std::vector<int> assign_pose_kmeans(const ClusterPartition& partition, const Pose& pose) {
        partition.validate();
        const auto d = centroid_distances(partition, pose);
        const double nearest = *std::min_element(d.begin(), d.end());
        const double limit = (1.0 + partition.overlap_margin) * nearest;
        std::vector<int> ids;
        for (std::size_t c = 0; c < d.size(); ++c)
            if (d[c] <= limit + inclusion_slack(limit))
                ids.push_back(static_cast<int>(c));
        return ids;
    }

    int route_kmeans(const ClusterPartition& partition, const Pose& pose) {
        partition.validate();
        const auto d = centroid_distances(partition, pose);
        return static_cast<int>(std::min_element(d.begin(), d.end()) - d.begin());
    }

    // ---------------------------------------------------------------------------------------------
    // Scene-level dispatch

    const char* partition_kind_name(PartitionKind kind) {
        switch (kind) {
        case PartitionKind::frontal: return "frontal";
        case PartitionKind::prism: return "prism";
        case PartitionKind::kmeans: return "kmeans";
        }
        return "frontal";
    }

    PartitionKind parse_partition_kind(const std::string& name) {
        if (name == "frontal")
            return PartitionKind::frontal;
        if (name == "prism")
            return PartitionKind::prism;
        if (name == "kmeans")
            return PartitionKind::kmeans;
        throw InvalidArgument("unknown partition kind '" + name + "' (expected frontal, prism or kmeans)");
    }

    int ScenePartition::subscene_count() const {
        switch (kind) {
        case PartitionKind::frontal: return 1;
        case PartitionKind::prism: return 5;
        case PartitionKind::kmeans: return clusters.k;
        }
        return 1;
    }

    int route_query(const ScenePartition& partition, const Pose& pose) {
        switch (partition.kind) {
        case PartitionKind::frontal: return 0;
        case PartitionKind::prism: return route_prism(partition.prism, pose.translation);
        case PartitionKind::kmeans: return route_kmeans(partition.clusters, pose);
        }
        return 0;
    }

    std::vector<int> assign_pose(const ScenePartition& partition, const Pose& pose) {
        switch (partition.kind) {
        case PartitionKind::frontal: return {0};
        case PartitionKind::prism: return assign_pose_prism(partition.prism, pose.translation);
        case PartitionKind::kmeans: return assign_pose_kmeans(partition.clusters, pose);
        }
        return {0};
    }

    Assignment assign_poses(const ScenePartition& partition, std::span<const Pose> poses) {
        Assignment a;
        a.subscene_poses.resize(static_cast<std::size_t>(partition.subscene_count()));
        for (std::size_t i = 0; i < poses.size(); ++i) {
            std::vector<int> ids;
            try {
                ids = assign_pose(partition, poses[i]);
            } catch (const UncoveredPose& e) {
                throw UncoveredPose("pose " + std::to_string(i) + ": " + e.what());
            }
            for (int id : ids)
                a.subscene_poses[static_cast<std::size_t>(id)].push_back(static_cast<int>(i));
            a.pose_subscenes.push_back(std::move(ids));
        }
        return a;
    }

    double estimate_radius(std::span<const Pose> poses) {
        if (poses.empty())
            throw InvalidArgument("estimate_radius: no poses");
        std::vector<double> d;
        d.reserve(poses.size());
        for (const auto& p : poses)
            d.push_back(p.translation.norm());
        std::sort(d.begin(), d.end());
        const std::size_t m = d.size() / 2;
        const double r = d.size() % 2 ? d[m] : 0.5 * (d[m - 1] + d[m]);
        if (!(r > 0.0))
            throw InvalidArgument("estimate_radius: cameras sit at the origin");
        return r;
    }

    RigidTransform frame_from_axis(const Vec3& axis) {
        const Vec3 n = axis.normalized();
        const Vec3 helper = std::abs(n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
        const Vec3 e1 = helper.cross(n).normalized();
        const Vec3 e2 = n.cross(e1);
        RigidTransform t;
        t.rotation.row(0) = e1.transpose();
        t.rotation.row(1) = e2.transpose();
        t.rotation.row(2) = n.transpose();
        return t;
    }

    SlabPlanes subscene_slab(const ScenePartition& partition, int subscene, std::span<const Pose> assigned_poses) {
        if (subscene < 0 || subscene >= partition.subscene_count())
            throw InvalidArgument("subscene_slab: id out of range");
        SlabPlanes slab;
        double radius = 1.0;
        Vec3 axis = Vec3::UnitZ();
        switch (partition.kind) {
        case PartitionKind::frontal:
            throw InvalidArgument("subscene_slab: frontal scenes use the NDC slab");
        case PartitionKind::prism:
            radius = partition.prism.radius;
            axis = PrismPartition::rows()[static_cast<std::size_t>(subscene)].normalized();
            break;
        case PartitionKind::kmeans: {
            Vec3 mean_forward = Vec3::Zero();
            for (const auto& p : assigned_poses)
                mean_forward += p.forward().normalized();
            if (mean_forward.norm() < 1e-9)
                mean_forward = partition.clusters.centroids[static_cast<std::size_t>(subscene)].tail<3>();
            if (mean_forward.norm() < 1e-9)
                mean_forward = -Vec3::UnitZ();
            axis = -mean_forward.normalized();
            radius = assigned_poses.empty() ? 1.0 : estimate_radius(assigned_poses);
            break;
        }
        }
        slab.frame = frame_from_axis(axis);
        slab.z_near = 0.9 * radius;
        slab.z_far = -1.1 * radius;
        return slab;
    }

    // ---------------------------------------------------------------------------------------------
    // JSON

    nlohmann::json partition_to_json(const ScenePartition& partition) {
        nlohmann::json j;
        j["kind"] = partition_kind_name(partition.kind);
        j["subscenes"] = partition.subscene_count();
        if (partition.kind == PartitionKind::prism) {
            j["radius"] = partition.prism.radius;
            j["plane_offset"] = partition.prism.plane_offset;
        } else if (partition.kind == PartitionKind::kmeans) {
            j["k"] = partition.clusters.k;
            j["overlap_margin"] = partition.clusters.overlap_margin;
            j["position_scale"] = partition.clusters.position_scale;
            auto cs = nlohmann::json::array();
            for (const auto& c : partition.clusters.centroids)
                cs.push_back(std::vector<double>(c.data(), c.data() + 6));
            j["centroids"] = cs;
        }
        return j;
    }

    ScenePartition partition_from_json(const nlohmann::json& j) {
        ScenePartition p;
        try {
            p.kind = parse_partition_kind(j.at("kind").get<std::string>());
            if (p.kind == PartitionKind::prism) {
                p.prism.radius = j.at("radius").get<double>();
                p.prism.plane_offset = j.value("plane_offset", 1.0);
                p.prism.validate();
            } else if (p.kind == PartitionKind::kmeans) {
                p.clusters.k = j.at("k").get<int>();
                p.clusters.overlap_margin = j.at("overlap_margin").get<double>();
                p.clusters.position_scale = j.at("position_scale").get<double>();
                for (const auto& c : j.at("centroids")) {
                    const auto v = c.get<std::vector<double>>();
                    if (v.size() != 6)
                        throw ParseError("centroid must have 6 components");
                    p.clusters.centroids.push_back(Eigen::Map<const Feature6>(v.data()));
                }
                p.clusters.validate();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("partition description: ") + e.what());
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("partition description: ") + e.what());
        }
        return p;
    }

    nlohmann::json partition_manifest(const ScenePartition& partition, const Assignment& assignment,
                                      std::span<const std::string> frame_names) {
        nlohmann::json j = partition_to_json(partition);
        auto subs = nlohmann::json::array();
        for (int s = 0; s < partition.subscene_count(); ++s) {
            nlohmann::json e;
            e["id"] = s;
            if (partition.kind == PartitionKind::prism) {
                const Vec3& row = PrismPartition::rows()[static_cast<std::size_t>(s)];
                e["hyperplane"] = {{"normal", {row.x(), row.y(), row.z()}},
                                   {"offset", partition.prism.plane_offset * partition.prism.radius}};
            } else if (partition.kind == PartitionKind::kmeans) {
                const auto& c = partition.clusters.centroids[static_cast<std::size_t>(s)];
                e["centroid"] = std::vector<double>(c.data(), c.data() + 6);
            }
            auto frames = nlohmann::json::array();
            if (static_cast<std::size_t>(s) < assignment.subscene_poses.size())
                for (int idx : assignment.subscene_poses[static_cast<std::size_t>(s)])
                    frames.push_back(static_cast<std::size_t>(idx) < frame_names.size()
                                         ? frame_names[static_cast<std::size_t>(idx)]
                                         : std::to_string(idx));
            e["frames"] = frames;
            subs.push_back(e);
        }
        j["subscene_list"] = subs;
        return j;
    }

} // namespace lightslab
