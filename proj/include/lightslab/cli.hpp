/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/dataset.hpp"
#include "lightslab/model.hpp"
#include "lightslab/trainer.hpp"

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace lightslab {

    struct SceneSettings {
        PartitionKind mode = PartitionKind::frontal;
        int downsample = 2;
        int k = 4;                    // kmeans only
        double overlap_margin = 0.1;  // kmeans only
        double plane_offset = 1.0;    // prism only
        std::uint64_t seed = 0;       // model init and k-means seeding
    };

    /// Everything `train` needs besides the data: JSON sections encoder, decoder, train, scene.
    struct EngineConfig {
        EncoderKind encoder_kind = EncoderKind::grid;
        EncoderConfig encoder;
        int num_freqs = 10;
        DecoderConfig decoder; // empty sr_modules are derived from scene.downsample
        TrainConfig train;
        SceneSettings scene;
    };

    // Unknown keys are rejected so typos do not silently fall back to defaults.
    EngineConfig parse_engine_config(const nlohmann::json& j);
    EngineConfig load_engine_config(const std::string& path);

    ScenePartition build_partition(const SceneSettings& settings, std::span<const Pose> poses);

    /// Untrained scene plus the per-sub-scene training sets.
    struct ScenePlan {
        SceneModel scene;
        Assignment assignment;
        std::vector<std::vector<TrainSample>> datasets;
    };
    ScenePlan plan_scene(const SceneData& data, const EngineConfig& config);

    // Entry point shared by the executable and the tests. args[0] is the program name.
    // Exit codes: 0 success, 1 runtime error, 2 usage error.
    int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace lightslab
