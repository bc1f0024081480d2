/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/dataset.hpp"
#include "lightslab/errors.hpp"
#include "lightslab/image.hpp"
#include "lightslab/service.hpp"
#include "support.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace lightslab;
using lightslab::testing::Gen;
using lightslab::testing::tiny_frontal_spec;

namespace {

    SceneModel tiny_scene() {
        SceneModel scene;
        LightFieldModel m = make_model(tiny_frontal_spec(8, 2), 41);
        Gen gen(601);
        m.pyramid = gen.pyramid(m.pyramid.config(), 0.5);
        scene.sub_models.push_back(std::move(m));
        return scene;
    }

    std::string pose_body(const Pose& pose) {
        const auto m = pose.to_row_major();
        return nlohmann::json{{"pose", m}}.dump();
    }

    // Runs the service on an ephemeral port for the lifetime of the object.
    class LiveService {
    public:
        explicit LiveService(SceneModel scene) : service_(std::move(scene)) {
            port_ = service_.bind("127.0.0.1", 0);
            thread_ = std::thread([this] { service_.run(); });
        }
        ~LiveService() {
            service_.stop();
            thread_.join();
        }
        httplib::Client client() const {
            httplib::Client c("127.0.0.1", port_);
            c.set_read_timeout(60, 0);
            return c;
        }
        int port() const { return port_; }

    private:
        RenderService service_;
        std::thread thread_;
        int port_ = 0;
    };

} // namespace

TEST_SUITE("service") {

    TEST_CASE("pose wire format") {
        Gen gen(607);
        for (int trial = 0; trial < 50; ++trial) {
            const Pose p = gen.pose(2.0);
            const Pose back = parse_pose_json(pose_body(p));
            CHECK((back.rotation - p.rotation).norm() == 0.0);
            CHECK((back.translation - p.translation).norm() == 0.0);
            const Pose bare = parse_pose_json(nlohmann::json(p.to_row_major()).dump());
            CHECK(bare.translation == p.translation);
        }
        const std::string id = "[1,0,0,0.5, 0,1,0,-1, 0,0,1,2, 0,0,0,1]";
        CHECK(parse_pose_json(id).translation == Vec3(0.5, -1, 2));

        CHECK_THROWS_WITH_AS(parse_pose_json("[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0]"), "pose: expected 16 numbers, got 15",
                             ParseError);
        CHECK_THROWS_WITH_AS(parse_pose_json("{\"matrix\": []}"), "pose: missing key 'pose'", ParseError);
        CHECK_THROWS_AS(parse_pose_json("not json"), ParseError);
        CHECK_THROWS_AS(parse_pose_json("[2,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]"), ParseError);
        CHECK_THROWS_AS(parse_pose_json("[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,\"x\"]"), ParseError);
        // A reflection is orthonormal but not a rotation.
        CHECK_THROWS_AS(parse_pose_json("[-1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]"), ParseError);
    }

    TEST_CASE("bind address parsing") {
        CHECK(parse_bind_address("0.0.0.0:8080").host == "0.0.0.0");
        CHECK(parse_bind_address("0.0.0.0:8080").port == 8080);
        CHECK(parse_bind_address(":9000").host == "127.0.0.1");
        CHECK(parse_bind_address("9000").port == 9000);
        CHECK_THROWS_AS(parse_bind_address("host:port"), InvalidArgument);
        CHECK_THROWS_AS(parse_bind_address("host:70000"), InvalidArgument);
        CHECK_THROWS_AS(parse_bind_address("8080x"), InvalidArgument);
    }

    TEST_CASE("healthz, meta and render endpoints") {
        const SceneModel scene = tiny_scene();
        LiveService live(scene);
        auto client = live.client();

        const auto health = client.Get("/healthz");
        REQUIRE(health);
        CHECK(health->status == 200);
        CHECK(health->body == "ok");
        CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

        const auto meta = client.Get("/meta");
        REQUIRE(meta);
        CHECK(meta->status == 200);
        const auto j = nlohmann::json::parse(meta->body);
        CHECK(j["width"] == 8);
        CHECK(j["height"] == 8);
        CHECK(j["partition"] == "frontal");
        CHECK(j["subscenes"] == 1);
        CHECK(j["routing_header"] == "X-Subscene-Id");

        const Pose pose = frontal_holdout_pose();
        const auto render = client.Post("/render", pose_body(pose), "application/json");
        REQUIRE(render);
        CHECK(render->status == 200);
        CHECK(render->get_header_value("Content-Type") == "image/png");
        CHECK(render->get_header_value(kSubsceneHeader) == "0");
        CHECK(std::stod(render->get_header_value(kRenderTimeHeader)) >= 0.0);
        CHECK(render->get_header_value("Access-Control-Expose-Headers").find(kSubsceneHeader) != std::string::npos);
        const std::vector<std::uint8_t> png(render->body.begin(), render->body.end());
        const ImageBuffer decoded = decode_png(png);
        CHECK(decoded.width == 8);
        CHECK(decoded.height == 8);
        const ImageBuffer direct = quantize_8bit(render_view(scene, pose));
        for (std::size_t i = 0; i < direct.values.size(); ++i)
            CHECK(decoded.values[i] == doctest::Approx(direct.values[i]).epsilon(1e-12));

        const auto bad = client.Post("/render", "{\"pose\": [1,2,3]}", "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 400);
        CHECK(bad->body == "pose: expected 16 numbers, got 3");

        const auto missing = client.Get("/nothing");
        REQUIRE(missing);
        CHECK(missing->status == 404);
    }

    TEST_CASE("concurrent renders equal sequential renders") {
        const SceneModel scene = tiny_scene();
        LiveService live(scene);
        Gen gen(613);
        std::vector<Pose> poses;
        for (int i = 0; i < 8; ++i) {
            Pose p;
            p.translation = Vec3(gen.uniform(-0.3, 0.3), gen.uniform(-0.3, 0.3), 0.0);
            poses.push_back(p);
        }
        std::vector<std::string> bodies(poses.size());
        std::vector<std::thread> clients;
        for (std::size_t i = 0; i < poses.size(); ++i)
            clients.emplace_back([&, i] {
                auto c = live.client();
                if (auto r = c.Post("/render", pose_body(poses[i]), "application/json"); r && r->status == 200)
                    bodies[i] = r->body;
            });
        for (auto& t : clients)
            t.join();
        for (std::size_t i = 0; i < poses.size(); ++i) {
            const auto expected = encode_png(render_view(scene, poses[i]));
            CHECK(bodies[i] == std::string(expected.begin(), expected.end()));
        }
    }
}
