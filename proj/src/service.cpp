/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/service.hpp"
#include "lightslab/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>

namespace lightslab {

    Pose parse_pose_json(const std::string& text) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("pose: invalid JSON: ") + e.what());
        }
        const nlohmann::json* arr = &j;
        if (j.is_object()) {
            if (!j.contains("pose"))
                throw ParseError("pose: missing key 'pose'");
            arr = &j["pose"];
        }
        if (!arr->is_array())
            throw ParseError("pose: expected an array of 16 numbers");
        if (arr->size() != 16)
            throw ParseError("pose: expected 16 numbers, got " + std::to_string(arr->size()));
        std::array<double, 16> m{};
        for (std::size_t i = 0; i < 16; ++i) {
            if (!(*arr)[i].is_number())
                throw ParseError("pose: element " + std::to_string(i) + " is not a number");
            m[i] = (*arr)[i].get<double>();
            if (!std::isfinite(m[i]))
                throw ParseError("pose: element " + std::to_string(i) + " is not finite");
        }
        const Pose pose = Pose::from_row_major(m);
        if (!pose.is_valid())
            throw ParseError("pose: rotation block is not orthonormal with det +1");
        return pose;
    }

    BindAddress parse_bind_address(const std::string& text) {
        BindAddress a{"127.0.0.1", 0};
        std::string port_text = text;
        if (const auto colon = text.rfind(':'); colon != std::string::npos) {
            if (colon > 0)
                a.host = text.substr(0, colon);
            port_text = text.substr(colon + 1);
        }
        try {
            std::size_t used = 0;
            a.port = std::stoi(port_text, &used);
            if (used != port_text.size())
                throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw InvalidArgument("bind address '" + text + "': expected host:port");
        }
        if (a.port < 0 || a.port > 65535)
            throw InvalidArgument("bind address '" + text + "': port out of range");
        return a;
    }

    struct RenderService::Impl {
        SceneModel scene;
        httplib::Server server;
    };

    RenderService::RenderService(SceneModel scene) : impl_(std::make_unique<Impl>()) {
        scene.validate();
        impl_->scene = std::move(scene);
        const SceneModel& model = impl_->scene;
        auto& srv = impl_->server;

        srv.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("ok", "text/plain");
        });

        srv.Get("/meta", [&model](const httplib::Request&, httplib::Response& res) {
            nlohmann::json j;
            j["width"] = model.camera().width;
            j["height"] = model.camera().height;
            j["partition"] = partition_kind_name(model.partition.kind);
            j["subscenes"] = model.partition.subscene_count();
            j["routing_header"] = kSubsceneHeader;
            res.set_content(j.dump(), "application/json");
        });

        srv.Post("/render", [&model](const httplib::Request& req, httplib::Response& res) {
            Pose pose;
            try {
                pose = parse_pose_json(req.body);
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(e.what(), "text/plain");
                return;
            }
            try {
                const auto t0 = std::chrono::steady_clock::now();
                const RenderResult r = render_view_routed(model, pose);
                const auto png = encode_png(r.image);
                const double ms =
                    std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
                char ms_text[32];
                std::snprintf(ms_text, sizeof(ms_text), "%.3f", ms);
                res.set_header(kSubsceneHeader, std::to_string(r.subscene));
                res.set_header(kRenderTimeHeader, ms_text);
                res.set_header("Access-Control-Expose-Headers",
                               std::string(kSubsceneHeader) + ", " + kRenderTimeHeader);
                res.set_content(std::string(png.begin(), png.end()), "image/png");
            } catch (const std::exception& e) {
                res.status = 500;
                res.set_content(std::string("render failed: ") + e.what(), "text/plain");
            }
        });

        srv.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Origin", "*");
        });
    }

    RenderService::~RenderService() { stop(); }

    int RenderService::bind(const std::string& host, int port) {
        if (port == 0) {
            const int bound = impl_->server.bind_to_any_port(host);
            if (bound < 0)
                throw std::runtime_error("cannot bind " + host);
            return bound;
        }
        if (!impl_->server.bind_to_port(host, port))
            throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
        return port;
    }

    void RenderService::run() { impl_->server.listen_after_bind(); }

    void RenderService::stop() {
        if (impl_)
            impl_->server.stop();
    }

    const SceneModel& RenderService::scene() const { return impl_->scene; }

} // namespace lightslab
