/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <stdexcept>
#include <string>

namespace lightslab {

    // Argument outside an operation's domain (bad shape, zero factor, k > n, ...).
    class InvalidArgument : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    // Config struct violates its invariants.
    class InvalidConfig : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    // Ray parallel to the plane it must cross.
    class DegenerateRay : public std::domain_error {
    public:
        using std::domain_error::domain_error;
    };

    class OutOfBounds : public std::out_of_range {
    public:
        using std::out_of_range::out_of_range;
    };

    // Backward called without a matching forward(train) tape.
    class InvalidState : public std::logic_error {
    public:
        using std::logic_error::logic_error;
    };

    class UncoveredPose : public std::domain_error {
    public:
        using std::domain_error::domain_error;
    };

    class NonFiniteError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    class ParseError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    class CodecError : public std::runtime_error {
    public:
        using std::runtime_error::runtime_error;
    };

    enum class CheckpointErrorKind { io, bad_magic, bad_version, truncated, shape_mismatch, malformed };

    class CheckpointError : public std::runtime_error {
    public:
        CheckpointError(CheckpointErrorKind kind, const std::string& what)
            : std::runtime_error(what), kind_(kind) {}
        CheckpointErrorKind kind() const noexcept { return kind_; }

    private:
        CheckpointErrorKind kind_;
    };

} // namespace lightslab
