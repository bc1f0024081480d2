/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/image.hpp"
#include "lightslab/model.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lightslab {

    struct TrainConfig {
        int max_steps = 2000;
        int batch_bundles = 1;
        double lr_init = 1e-5;
        double lr_peak = 5e-4;
        int warmup_steps = 100;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_eps = 1e-8;
        std::uint64_t seed = 0;
        int eval_interval = 0;       // holdout PSNR every N steps; 0 disables
        int checkpoint_interval = 0; // checkpoint callback every N steps; 0 disables
        // After the last step, replace the running normalization statistics with ones measured
        // in a single pass over the whole dataset. Costs one full-dataset forward in memory.
        bool recalibrate_norm = false;

        void validate() const;
    };

    struct OptimizerState {
        std::vector<double> m;
        std::vector<double> v;
        std::int64_t t = 0;

        explicit OptimizerState(std::size_t count = 0) : m(count, 0.0), v(count, 0.0) {}
    };

    struct TrainSample {
        Pose pose;
        ImageBuffer target;
        std::string name;
    };

    struct LossResult {
        double loss = 0.0;
        FeatureMap grad; // dLoss / dPred
    };

    // Mean of (pred - target)^2 over every element; gradient 2 (pred - target) / count.
    LossResult mse_loss(const FeatureMap& pred, const FeatureMap& target);

    // Linear warmup lr_init -> lr_peak over [0, warmup_steps], then linear decay to 0 at max_steps.
    double lr_at(int step, const TrainConfig& config);

    // One Adam update over `params` (float storage, double arithmetic). Increments state.t.
    // Throws NonFiniteError before touching anything if a gradient is NaN or infinite.
    void adam_step(std::span<float> params, std::span<const double> grads, OptimizerState& state, double lr,
                   const TrainConfig& config);

    struct TrainRecord {
        int step = 0;
        double loss = 0.0;
        double lr = 0.0;
        std::optional<double> holdout_psnr;
    };

    struct TrainOptions {
        std::span<const TrainSample> holdout;
        std::function<void(int step, const LightFieldModel&)> on_checkpoint;
        // Called after every recorded step; returning true ends training early.
        std::function<bool(const TrainRecord&)> should_stop;
    };

    struct TrainResult {
        std::vector<TrainRecord> history;
        bool halted = false; // non-finite loss or gradient
        std::string diagnostic;
    };

    // Distillation loop: batch_bundles whole bundles per step, decoder then encoder backward,
    // one Adam update over grid + decoder parameters.
    TrainResult train(LightFieldModel& model, std::span<const TrainSample> dataset, const TrainConfig& config,
                      const TrainOptions& options = {});

    // Sets every running mean/variance to the batch statistics of all samples at once.
    void recalibrate_normalization(LightFieldModel& model, std::span<const TrainSample> samples);

    // Mean PSNR of eval-mode renders against the samples' targets.
    double mean_psnr(const LightFieldModel& model, std::span<const TrainSample> samples);

    struct SubsceneOutcome {
        TrainResult result;
        std::optional<std::string> error;
    };

    // Trains each model on its own dataset; failures are captured per sub-scene.
    std::vector<SubsceneOutcome> train_partitioned(std::span<LightFieldModel> models,
                                                   std::span<const std::vector<TrainSample>> datasets,
                                                   std::span<const TrainConfig> configs, bool concurrent = true);

    // CSV with header step,loss,lr,psnr_on_holdout; missing PSNR cells are empty.
    void write_loss_history(std::ostream& out, std::span<const TrainRecord> history);

} // namespace lightslab
