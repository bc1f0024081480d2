/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/decoder.hpp"
#include "lightslab/encoder.hpp"
#include "lightslab/geometry.hpp"
#include "lightslab/model.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace lightslab::testing {

    /// Small deterministic generator for property tests.
    class Gen {
    public:
        explicit Gen(std::uint64_t seed) : rng_(seed) {}

        double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
        double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
        int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
        bool coin() { return integer(0, 1) == 1; }
        std::uint64_t bits() { return rng_(); }

        Vec3 vec3(double lo = -1.0, double hi = 1.0) { return {uniform(lo, hi), uniform(lo, hi), uniform(lo, hi)}; }
        Vec3 unit_vec3();
        Mat3 rotation();
        Pose pose(double spread = 1.0);
        Ray4 unit_ray4();
        FeatureMap feature_map(int n, int h, int w, int c, double scale = 1.0);
        // Pyramid with every value uniform in [-scale, scale].
        FeatureGridPyramid pyramid(const EncoderConfig& config, double scale = 1.0);
        RayBundle unit_bundle(int h, int w);

        std::mt19937_64& engine() { return rng_; }

    private:
        std::mt19937_64 rng_;
    };

    // |a - b| <= max(abs_floor, rel * max(|a|, |b|)).
    bool grad_close(double analytic, double numeric, double rel = 1e-3, double abs_floor = 1e-5);

    struct GradReport {
        std::string label;
        int checked = 0;
        int failed = 0;
        double worst_error = 0.0; // |a - n| / max(abs_floor, rel-scale)
        std::string worst_entry;

        bool ok() const { return checked > 0 && failed == 0; }
        void record(const std::string& entry, double analytic, double numeric);
    };

    // Central differences on float32 storage. The step is the difference actually
    // representable in float, so rounding of p +- h does not bias the quotient.
    template <class Loss>
    double central_difference(float& slot, double h, Loss&& loss) {
        const float original = slot;
        const float up = static_cast<float>(original + h);
        const float down = static_cast<float>(original - h);
        slot = up;
        const double f_up = loss();
        slot = down;
        const double f_down = loss();
        slot = original;
        return (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
    }

    template <class Loss>
    double central_difference(double& slot, double h, Loss&& loss) {
        const double original = slot;
        slot = original + h;
        const double f_up = loss();
        slot = original - h;
        const double f_down = loss();
        slot = original;
        return (f_up - f_down) / (2.0 * h);
    }

    // Randomized gradient configurations; `seed` picks the architecture and the data.
    GradReport check_encoder_gradient(std::uint64_t seed);
    GradReport check_decoder_gradient(std::uint64_t seed, DecoderMode mode);
    GradReport check_end_to_end_gradient(std::uint64_t seed);

    // Small frontal model over a `size` x `size` camera with NDC slab and given encoder.
    ModelSpec tiny_frontal_spec(int size, int downsample, EncoderKind kind = EncoderKind::grid);

    // Scoped scratch directory under the system temp dir, removed on destruction.
    class TempDir {
    public:
        explicit TempDir(const std::string& tag);
        ~TempDir();
        TempDir(const TempDir&) = delete;
        TempDir& operator=(const TempDir&) = delete;

        const std::filesystem::path& path() const { return path_; }
        std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

    private:
        std::filesystem::path path_;
    };

} // namespace lightslab::testing
