/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/trainer.hpp"
#include "lightslab/errors.hpp"
#include "lightslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <thread>

namespace lightslab {

    void TrainConfig::validate() const {
        if (max_steps < 0)
            throw InvalidConfig("train: max_steps must be >= 0");
        if (batch_bundles < 1)
            throw InvalidConfig("train: batch_bundles must be >= 1");
        if (!(lr_init > 0.0) || !(lr_peak > 0.0))
            throw InvalidConfig("train: learning rates must be > 0");
        if (warmup_steps < 0 || (max_steps > 0 && warmup_steps >= max_steps))
            throw InvalidConfig("train: warmup_steps must be < max_steps");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
            throw InvalidConfig("train: Adam betas must lie in [0, 1)");
        if (!(adam_eps > 0.0))
            throw InvalidConfig("train: adam_eps must be > 0");
        if (eval_interval < 0 || checkpoint_interval < 0)
            throw InvalidConfig("train: intervals must be >= 0");
    }

    LossResult mse_loss(const FeatureMap& pred, const FeatureMap& target) {
        if (!pred.same_shape(target))
            throw InvalidArgument("mse_loss: prediction and target shapes differ");
        LossResult r;
        r.grad = FeatureMap(pred.n, pred.h, pred.w, pred.c);
        const double count = static_cast<double>(pred.data.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            const double d = pred.data[i] - target.data[i];
            sum += d * d;
            r.grad.data[i] = 2.0 * d / count;
        }
        r.loss = sum / count;
        return r;
    }

    double lr_at(int step, const TrainConfig& config) {
        if (step < 0 || step > config.max_steps)
            throw InvalidArgument("lr_at: step " + std::to_string(step) + " outside [0, max_steps]");
        if (step <= config.warmup_steps) {
            if (config.warmup_steps == 0)
                return config.lr_peak;
            const double f = static_cast<double>(step) / config.warmup_steps;
            return config.lr_init + f * (config.lr_peak - config.lr_init);
        }
        const double f = static_cast<double>(config.max_steps - step) / (config.max_steps - config.warmup_steps);
        return config.lr_peak * f;
    }

    namespace {

        void require_finite(std::span<const double> grads, const char* what) {
            for (std::size_t i = 0; i < grads.size(); ++i)
                if (!std::isfinite(grads[i]))
                    throw NonFiniteError(std::string("non-finite gradient in ") + what + " at index " +
                                         std::to_string(i) + "; step aborted");
        }

        // Update with an already-incremented step counter `t`.
        void adam_update(std::span<float> params, std::span<const double> grads, std::span<double> m,
                         std::span<double> v, std::int64_t t, double lr, const TrainConfig& c) {
            const double b1 = c.adam_beta1;
            const double b2 = c.adam_beta2;
            const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
            const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = grads[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                const double m_hat = m[i] / corr1;
                const double v_hat = v[i] / corr2;
                params[i] = static_cast<float>(static_cast<double>(params[i]) - lr * m_hat / (std::sqrt(v_hat) + c.adam_eps));
            }
        }

        FeatureMap target_map(const ImageBuffer& img) { return map_from_images(std::span<const ImageBuffer>(&img, 1)); }

        void append_item(FeatureMap& batch, int index, const FeatureMap& item) {
            const std::size_t count = item.data.size();
            std::copy(item.data.begin(), item.data.end(),
                      batch.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(index) * count));
        }

    } // namespace

    void adam_step(std::span<float> params, std::span<const double> grads, OptimizerState& state, double lr,
                   const TrainConfig& config) {
        if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
            throw InvalidArgument("adam_step: parameter, gradient and moment sizes differ");
        require_finite(grads, "adam_step");
        ++state.t;
        adam_update(params, grads, state.m, state.v, state.t, lr, config);
    }

    void recalibrate_normalization(LightFieldModel& model, std::span<const TrainSample> samples) {
        if (samples.empty())
            throw InvalidArgument("recalibrate_normalization: no samples");
        std::vector<RayBundle> bundles;
        bundles.reserve(samples.size());
        for (const auto& s : samples)
            bundles.push_back(model_bundle(model, s.pose));
        DecoderOutput out = decoder_forward(model.decoder, encode_for_model(model, bundles), DecoderMode::train);
        freeze_running_statistics(model.decoder, *out.tape);
    }

    double mean_psnr(const LightFieldModel& model, std::span<const TrainSample> samples) {
        if (samples.empty())
            throw InvalidArgument("mean_psnr: no samples");
        double sum = 0.0;
        for (const auto& s : samples)
            sum += psnr(render_model(model, s.pose), s.target);
        return sum / static_cast<double>(samples.size());
    }

    TrainResult train(LightFieldModel& model, std::span<const TrainSample> dataset, const TrainConfig& config,
                      const TrainOptions& options) {
        config.validate();
        model.validate();
        TrainResult result;
        if (config.max_steps == 0)
            return result;
        if (dataset.empty())
            throw InvalidArgument("train: empty dataset");

        const bool grid = model.encoder_kind == EncoderKind::grid;
        std::vector<RayBundle> bundles;
        std::vector<FeatureMap> targets;
        std::vector<FeatureMap> cached_features; // frequency encoder only: inputs never change
        bundles.reserve(dataset.size());
        for (const auto& s : dataset) {
            if (s.target.width != model.camera.width || s.target.height != model.camera.height)
                throw InvalidArgument("train: sample '" + s.name + "' is " + std::to_string(s.target.width) + "x" +
                                      std::to_string(s.target.height) + ", camera is " +
                                      std::to_string(model.camera.width) + "x" + std::to_string(model.camera.height));
            bundles.push_back(model_bundle(model, s.pose));
            targets.push_back(target_map(s.target));
            if (!grid)
                cached_features.push_back(frequency_encode_bundles(std::span<const RayBundle>(&bundles.back(), 1),
                                                                   model.num_freqs));
        }

        const std::size_t grid_count = grid ? model.pyramid.parameter_count() : 0;
        const std::size_t dec_count = model.decoder.params.size();
        OptimizerState state(grid_count + dec_count);
        std::span<double> m_all(state.m);
        std::span<double> v_all(state.v);

        std::mt19937_64 rng(config.seed);
        const int batch = config.batch_bundles;
        const int h_l = model.bundle_height();
        const int w_l = model.bundle_width();
        std::vector<double> grid_grad(grid_count);

        for (int step = 0; step < config.max_steps; ++step) {
            std::vector<std::size_t> picks(static_cast<std::size_t>(batch));
            for (auto& p : picks)
                p = static_cast<std::size_t>(rng() % dataset.size());

            FeatureMap features;
            if (grid) {
                std::vector<RayBundle> chosen;
                chosen.reserve(picks.size());
                for (auto p : picks)
                    chosen.push_back(bundles[p]);
                features = encode_bundles(model.pyramid, chosen);
            } else {
                features = FeatureMap(batch, h_l, w_l, model.encoder_channels());
                for (int b = 0; b < batch; ++b)
                    append_item(features, b, cached_features[picks[static_cast<std::size_t>(b)]]);
            }
            FeatureMap target(batch, model.camera.height, model.camera.width, 3);
            for (int b = 0; b < batch; ++b)
                append_item(target, b, targets[picks[static_cast<std::size_t>(b)]]);

            DecoderOutput out = decoder_forward(model.decoder, features, DecoderMode::train);
            const LossResult loss = mse_loss(out.image, target);
            if (!std::isfinite(loss.loss)) {
                result.halted = true;
                result.diagnostic = "non-finite loss at step " + std::to_string(step) + "; parameters left at step " +
                                    std::to_string(step - 1);
                break;
            }

            DecoderGradients g = decoder_backward(model.decoder, *out.tape, loss.grad);
            if (grid) {
                std::fill(grid_grad.begin(), grid_grad.end(), 0.0);
                for (int b = 0; b < batch; ++b)
                    accumulate_encoder_gradient(model.pyramid, bundles[picks[static_cast<std::size_t>(b)]], g.input, b,
                                                grid_grad);
            }
            try {
                require_finite(grid_grad, "feature grids");
                require_finite(g.params, "decoder");
            } catch (const NonFiniteError& e) {
                result.halted = true;
                result.diagnostic = "step " + std::to_string(step) + ": " + e.what();
                break;
            }

            const double lr = lr_at(step, config);
            ++state.t;
            if (grid)
                adam_update(model.pyramid.values(), grid_grad, m_all.first(grid_count), v_all.first(grid_count),
                            state.t, lr, config);
            adam_update(model.decoder.params.values(), g.params, m_all.subspan(grid_count),
                        v_all.subspan(grid_count), state.t, lr, config);
            update_running_statistics(model.decoder, *out.tape);
            model.decoder.touch();

            TrainRecord rec{step, loss.loss, lr, std::nullopt};
            const int done = step + 1;
            if (config.eval_interval > 0 && !options.holdout.empty() &&
                (done % config.eval_interval == 0 || done == config.max_steps))
                rec.holdout_psnr = mean_psnr(model, options.holdout);
            if (config.checkpoint_interval > 0 && options.on_checkpoint && done % config.checkpoint_interval == 0)
                options.on_checkpoint(done, model);
            result.history.push_back(rec);
            if (options.should_stop && options.should_stop(rec))
                break;
        }
        if (config.recalibrate_norm && !result.halted && !result.history.empty())
            recalibrate_normalization(model, dataset);
        return result;
    }

    std::vector<SubsceneOutcome> train_partitioned(std::span<LightFieldModel> models,
                                                   std::span<const std::vector<TrainSample>> datasets,
                                                   std::span<const TrainConfig> configs, bool concurrent) {
        if (datasets.size() != models.size() || configs.size() != models.size())
            throw InvalidArgument("train_partitioned: models, datasets and configs differ in count");
        std::vector<SubsceneOutcome> outcomes(models.size());
        auto run = [&](std::size_t i) {
            try {
                outcomes[i].result = train(models[i], datasets[i], configs[i]);
            } catch (const std::exception& e) {
                outcomes[i].error = "sub-scene " + std::to_string(i) + ": " + e.what();
            }
        };
        if (!concurrent) {
            for (std::size_t i = 0; i < models.size(); ++i)
                run(i);
            return outcomes;
        }
        std::vector<std::thread> workers;
        workers.reserve(models.size());
        for (std::size_t i = 0; i < models.size(); ++i)
            workers.emplace_back(run, i);
        for (auto& w : workers)
            w.join();
        return outcomes;
    }

    void write_loss_history(std::ostream& out, std::span<const TrainRecord> history) {
        out << "step,loss,lr,psnr_on_holdout\n";
        const auto old_precision = out.precision(17);
        for (const auto& r : history) {
            out << r.step << ',' << r.loss << ',' << r.lr << ',';
            if (r.holdout_psnr)
                out << *r.holdout_psnr;
            out << '\n';
        }
        out.precision(old_precision);
    }

} // namespace lightslab
