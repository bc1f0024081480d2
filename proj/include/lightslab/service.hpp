/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include "lightslab/model.hpp"

#include <memory>
#include <string>

namespace lightslab {

    inline constexpr const char* kSubsceneHeader = "X-Subscene-Id";
    inline constexpr const char* kRenderTimeHeader = "X-Render-Ms";

    /**
     * HTTP front end over an immutable SceneModel.
     *
     *   GET  /healthz -> 200 "ok"
     *   GET  /meta    -> {"width", "height", "partition", "subscenes", "routing_header"}
     *   POST /render  -> body {"pose": [16 numbers, row-major camera-to-world]}, replies image/png
     *                    with X-Subscene-Id and X-Render-Ms headers; 400 on a malformed pose,
     *                    500 when rendering fails.
     */
    class RenderService {
    public:
        explicit RenderService(SceneModel scene);
        ~RenderService();
        RenderService(const RenderService&) = delete;
        RenderService& operator=(const RenderService&) = delete;

        // Binds `host:port`; port 0 picks a free port. Returns the bound port.
        int bind(const std::string& host, int port);
        // Blocks until stop() is called.
        void run();
        void stop();

        const SceneModel& scene() const;

    private:
        struct Impl;
        std::unique_ptr<Impl> impl_;
    };

    struct BindAddress {
        std::string host;
        int port = 0;
    };
    // "host:port", ":port" or "port".
    BindAddress parse_bind_address(const std::string& text);

    // Pose from a JSON document {"pose": [...]} or a bare 16-number array; throws ParseError.
    Pose parse_pose_json(const std::string& text);

} // namespace lightslab
