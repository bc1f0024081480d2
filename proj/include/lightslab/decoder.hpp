/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/param_store.hpp"
#include "lightslab/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace lightslab {

    /// One super-resolution stage: transposed conv upsampling, then two residual blocks.
    struct SrStageConfig {
        int kernel_size = 4;
        int upsample_factor = 2;
        int channels = 0; // 0 means "same as the decoder width"
    };

    struct DecoderConfig {
        int depth = 60; // point-wise convs in the residual trunk
        int width = 256;
        std::vector<SrStageConfig> sr_modules;
        int out_channels = 3;

        void validate() const;
        int upsample_product() const;
        int stage_channels(std::size_t stage) const;
        int final_channels() const;

        // Full-size decoder with three SR stages; the last one is x3 for forward-facing scenes.
        static DecoderConfig full(bool forward_facing);
    };

    // frozen: records a tape like train, but normalizes with the running statistics
    // and treats them as constants in backward.
    enum class DecoderMode { train, eval, frozen };

    inline constexpr double kNormEpsilon = 1e-5;
    inline constexpr double kRunningMomentum = 0.9;

    struct Conv1x1Layer {
        int in = 0;
        int out = 0;
        std::size_t weight = 0; // [out, in]
        std::optional<std::size_t> bias;
    };

    struct NormLayer {
        int channels = 0;
        std::size_t scale = 0;
        std::size_t shift = 0;
        std::size_t running_mean = 0; // offsets into DecoderParams::buffers
        std::size_t running_var = 0;
    };

    struct ResidualBlockLayer {
        Conv1x1Layer conv1;
        NormLayer norm1;
        Conv1x1Layer conv2;
        NormLayer norm2;
    };

    struct TransposedConvLayer {
        int in = 0;
        int out = 0;
        int kernel = 4;
        int stride = 2;
        std::size_t weight = 0; // [k, k, in, out]
        std::size_t bias = 0;
    };

    struct SrStageLayer {
        TransposedConvLayer up;
        std::vector<ResidualBlockLayer> blocks;
    };

    /**
     * Decoder weights and normalization statistics.
     *
     * Trainable tensors live in `params`, running statistics in `buffers`; the
     * layer structs hold offsets into those stores. `version()` changes whenever
     * an optimizer writes the weights so stale activation tapes are detected.
     */
    class DecoderParams {
    public:
        DecoderParams() = default;
        // Zero-valued parameters with running variance 1 and norm scale 1.
        DecoderParams(const DecoderConfig& config, int in_channels);

        const DecoderConfig& config() const { return config_; }
        int in_channels() const { return in_channels_; }

        ParamStore params;
        ParamStore buffers;

        const Conv1x1Layer& stem() const { return stem_; }
        const std::vector<ResidualBlockLayer>& blocks() const { return blocks_; }
        const std::vector<SrStageLayer>& sr_stages() const { return sr_stages_; }
        const Conv1x1Layer& head() const { return head_; }

        std::uint64_t version() const { return version_; }
        void touch() { ++version_; }

        std::size_t parameter_count() const { return params.size(); }

    private:
        DecoderConfig config_;
        int in_channels_ = 0;
        Conv1x1Layer stem_;
        std::vector<ResidualBlockLayer> blocks_;
        std::vector<SrStageLayer> sr_stages_;
        Conv1x1Layer head_;
        std::uint64_t version_ = 0;
    };

    // Weights uniform(-sqrt(1/fan_in), sqrt(1/fan_in)); deterministic in `seed`.
    DecoderParams init_decoder(const DecoderConfig& config, int in_channels, std::uint64_t seed);

    struct NormCache {
        std::vector<double> mean;
        std::vector<double> var;
        std::vector<double> inv_std;
        FeatureMap normalized; // x_hat
        bool batch_statistics = true;
    };

    struct BlockCache {
        FeatureMap input;
        NormCache norm1;
        FeatureMap act1_pre; // norm1 output, GeLU input
        FeatureMap act1;     // conv2 input
        NormCache norm2;
        FeatureMap sum;      // skip + norm2 output, final GeLU input
    };

    struct SrStageCache {
        FeatureMap input;
        std::vector<BlockCache> blocks;
    };

    /// Activations recorded by a train-mode forward for the matching backward call.
    struct ActivationTape {
        const DecoderParams* owner = nullptr;
        std::uint64_t version = 0;
        bool consumed = false;
        DecoderMode mode = DecoderMode::train;

        FeatureMap stem_input;
        std::vector<BlockCache> blocks;
        std::vector<SrStageCache> sr_stages;
        FeatureMap head_input;
        FeatureMap output;
    };

    struct DecoderOutput {
        FeatureMap image; // (n, h, w, 3) in [0, 1]
        std::optional<ActivationTape> tape;
    };

    // Output spatial size is input size times the SR factor product.
    DecoderOutput decoder_forward(const DecoderParams& params, const FeatureMap& features, DecoderMode mode);
    FeatureMap decoder_forward_eval(const DecoderParams& params, const FeatureMap& features);

    struct DecoderGradients {
        std::vector<double> params; // same layout as DecoderParams::params
        FeatureMap input;           // dLoss / dFeatureMap
    };

    // Marks the tape consumed; reuse or a tape from other/modified params is an InvalidState.
    DecoderGradients decoder_backward(const DecoderParams& params, ActivationTape& tape, const FeatureMap& upstream);

    // running <- m * running + (1 - m) * batch, using biased batch variance.
    // A no-op for frozen-mode tapes.
    void update_running_statistics(DecoderParams& params, const ActivationTape& tape,
                                   double momentum = kRunningMomentum);
    // running <- batch statistics of `tape`.
    void freeze_running_statistics(DecoderParams& params, const ActivationTape& tape);

    // Padding giving exactly stride x upsampling: (4, 2) -> 1, (3, 3) -> 0.
    int transposed_conv_padding(int kernel, int stride);

    // weights: [k, k, in, out]; bias may be empty.
    FeatureMap transposed_conv_forward(const FeatureMap& input, std::span<const float> weights, int out_channels,
                                       int kernel, int stride, std::span<const float> bias = {});

    struct TransposedConvGradients {
        FeatureMap input;
        std::vector<double> weights;
        std::vector<double> bias;
    };
    TransposedConvGradients transposed_conv_backward(const FeatureMap& input, std::span<const float> weights,
                                                     int out_channels, int kernel, int stride,
                                                     const FeatureMap& upstream);

    double gelu(double x);
    double gelu_derivative(double x);

} // namespace lightslab
