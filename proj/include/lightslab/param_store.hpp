/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lightslab {

    /// A named, shaped slice of a ParamStore.
    struct TensorSlot {
        std::string name;
        std::vector<std::uint32_t> shape;
        std::size_t offset = 0;
        std::size_t size = 0;

        bool operator==(const TensorSlot&) const = default;
    };

    /// Flat float32 storage for a set of named tensors, in registration order.
    class ParamStore {
    public:
        // Appends a zero-filled tensor and returns its offset.
        std::size_t add(std::string name, std::vector<std::uint32_t> shape);

        const std::vector<TensorSlot>& slots() const { return slots_; }
        const TensorSlot* find(const std::string& name) const;

        std::span<float> values() { return values_; }
        std::span<const float> values() const { return values_; }
        std::span<float> slice(std::size_t offset, std::size_t count) { return {values_.data() + offset, count}; }
        std::span<const float> slice(std::size_t offset, std::size_t count) const {
            return {values_.data() + offset, count};
        }
        float* data() { return values_.data(); }
        const float* data() const { return values_.data(); }
        std::size_t size() const { return values_.size(); }

        bool operator==(const ParamStore&) const = default;

    private:
        std::vector<TensorSlot> slots_;
        std::vector<float> values_;
    };

} // namespace lightslab
