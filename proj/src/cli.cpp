/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/cli.hpp"
#include "lightslab/errors.hpp"
#include "lightslab/metrics.hpp"
#include "lightslab/service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

namespace lightslab {

    namespace {

        using nlohmann::json;

        void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& section) {
            if (!j.is_object())
                throw ParseError("config: section '" + section + "' must be an object");
            for (const auto& [key, value] : j.items())
                if (!allowed.count(key))
                    throw ParseError("config: unknown key '" + section + "." + key + "'");
        }

        template <class T>
        void read_opt(const json& j, const char* key, T& out) {
            if (j.contains(key))
                out = j.at(key).get<T>();
        }

    } // namespace

    EngineConfig parse_engine_config(const json& j) {
        EngineConfig c;
        try {
            reject_unknown(j, {"encoder", "decoder", "train", "scene"}, "root");
            if (j.contains("encoder")) {
                const auto& e = j["encoder"];
                reject_unknown(e, {"kind", "levels", "feature_dim", "min_resolution", "max_resolution", "num_freqs"},
                               "encoder");
                std::string kind = "grid";
                read_opt(e, "kind", kind);
                if (kind == "grid")
                    c.encoder_kind = EncoderKind::grid;
                else if (kind == "frequency")
                    c.encoder_kind = EncoderKind::frequency;
                else
                    throw ParseError("config: encoder.kind must be 'grid' or 'frequency'");
                read_opt(e, "levels", c.encoder.levels);
                read_opt(e, "feature_dim", c.encoder.feature_dim);
                read_opt(e, "min_resolution", c.encoder.min_resolution);
                read_opt(e, "max_resolution", c.encoder.max_resolution);
                read_opt(e, "num_freqs", c.num_freqs);
            }
            if (j.contains("decoder")) {
                const auto& d = j["decoder"];
                reject_unknown(d, {"depth", "width", "out_channels", "sr_modules"}, "decoder");
                read_opt(d, "depth", c.decoder.depth);
                read_opt(d, "width", c.decoder.width);
                read_opt(d, "out_channels", c.decoder.out_channels);
                if (d.contains("sr_modules"))
                    for (const auto& s : d["sr_modules"]) {
                        reject_unknown(s, {"kernel_size", "upsample_factor", "channels"}, "decoder.sr_modules[]");
                        SrStageConfig st;
                        read_opt(s, "kernel_size", st.kernel_size);
                        read_opt(s, "upsample_factor", st.upsample_factor);
                        read_opt(s, "channels", st.channels);
                        c.decoder.sr_modules.push_back(st);
                    }
            }
            if (j.contains("train")) {
                const auto& t = j["train"];
                reject_unknown(t,
                               {"max_steps", "batch_bundles", "lr_init", "lr_peak", "warmup_steps", "adam_beta1",
                                "adam_beta2", "adam_eps", "seed", "eval_interval", "checkpoint_interval",
                                "recalibrate_norm"},
                               "train");
                read_opt(t, "max_steps", c.train.max_steps);
                read_opt(t, "batch_bundles", c.train.batch_bundles);
                read_opt(t, "lr_init", c.train.lr_init);
                read_opt(t, "lr_peak", c.train.lr_peak);
                read_opt(t, "warmup_steps", c.train.warmup_steps);
                read_opt(t, "adam_beta1", c.train.adam_beta1);
                read_opt(t, "adam_beta2", c.train.adam_beta2);
                read_opt(t, "adam_eps", c.train.adam_eps);
                read_opt(t, "seed", c.train.seed);
                read_opt(t, "eval_interval", c.train.eval_interval);
                read_opt(t, "checkpoint_interval", c.train.checkpoint_interval);
                read_opt(t, "recalibrate_norm", c.train.recalibrate_norm);
            }
            if (j.contains("scene")) {
                const auto& s = j["scene"];
                reject_unknown(s, {"mode", "downsample", "k", "overlap_margin", "plane_offset", "seed"}, "scene");
                if (s.contains("mode"))
                    c.scene.mode = parse_partition_kind(s["mode"].get<std::string>());
                read_opt(s, "downsample", c.scene.downsample);
                read_opt(s, "k", c.scene.k);
                read_opt(s, "overlap_margin", c.scene.overlap_margin);
                read_opt(s, "plane_offset", c.scene.plane_offset);
                read_opt(s, "seed", c.scene.seed);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("config: ") + e.what());
        } catch (const InvalidArgument& e) {
            throw ParseError(std::string("config: ") + e.what());
        }
        if (c.decoder.sr_modules.empty())
            c.decoder.sr_modules = default_sr_modules(c.scene.downsample);
        if (c.encoder_kind == EncoderKind::grid)
            c.encoder.validate();
        c.decoder.validate();
        c.train.validate();
        return c;
    }

    EngineConfig load_engine_config(const std::string& path) {
        std::ifstream in(path);
        if (!in)
            throw ParseError("cannot open config " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ParseError(path + ": " + e.what());
        }
        return parse_engine_config(j);
    }

    ScenePartition build_partition(const SceneSettings& settings, std::span<const Pose> poses) {
        ScenePartition p;
        p.kind = settings.mode;
        if (p.kind == PartitionKind::prism) {
            p.prism.radius = estimate_radius(poses);
            p.prism.plane_offset = settings.plane_offset;
            p.prism.validate();
        } else if (p.kind == PartitionKind::kmeans) {
            p.clusters = fit_kmeans_partition(poses, settings.k, settings.overlap_margin, settings.seed);
        }
        return p;
    }

    ScenePlan plan_scene(const SceneData& data, const EngineConfig& config) {
        std::vector<Pose> poses;
        poses.reserve(data.samples.size());
        for (const auto& s : data.samples)
            poses.push_back(s.pose);

        ScenePlan plan;
        plan.scene.partition = build_partition(config.scene, poses);
        plan.assignment = assign_poses(plan.scene.partition, poses);
        const int subscenes = plan.scene.partition.subscene_count();
        plan.datasets.resize(static_cast<std::size_t>(subscenes));

        for (int s = 0; s < subscenes; ++s) {
            const auto& idx = plan.assignment.subscene_poses[static_cast<std::size_t>(s)];
            std::vector<Pose> assigned;
            for (int i : idx) {
                assigned.push_back(poses[static_cast<std::size_t>(i)]);
                plan.datasets[static_cast<std::size_t>(s)].push_back(data.samples[static_cast<std::size_t>(i)]);
            }

            ModelSpec spec;
            spec.camera = data.camera;
            spec.downsample = config.scene.downsample;
            spec.parameterization =
                plan.scene.partition.kind == PartitionKind::frontal
                    ? RayParameterization::ndc(data.camera)
                    : RayParameterization::rigid(subscene_slab(plan.scene.partition, s, assigned));
            if (assigned.empty()) {
                for (auto& b : spec.bounds)
                    b = {0.0, 1.0};
            } else {
                std::vector<RayBundle> raw;
                for (const auto& p : assigned)
                    raw.push_back(parameterize_grid(generate_ray_bundle(data.camera, p, spec.downsample),
                                                    spec.parameterization));
                spec.bounds = fit_coordinate_bounds(raw);
            }
            spec.encoder_kind = config.encoder_kind;
            spec.encoder = config.encoder;
            spec.num_freqs = config.num_freqs;
            spec.decoder = config.decoder;
            plan.scene.sub_models.push_back(make_model(spec, config.scene.seed + static_cast<std::uint64_t>(s)));
        }
        return plan;
    }

    namespace {

        struct UsageError : std::runtime_error {
            using std::runtime_error::runtime_error;
        };

        std::atomic<RenderService*> g_active_service{nullptr};

        extern "C" void handle_stop_signal(int) {
            if (RenderService* s = g_active_service.load())
                s->stop();
        }

        std::string read_text(const std::string& path) {
            std::ifstream in(path);
            if (!in)
                throw ParseError("cannot open " + path);
            std::stringstream ss;
            ss << in.rdbuf();
            return ss.str();
        }

        int cmd_train(const std::string& scene_dir, const std::string& config_path, const std::string& out_path,
                      const std::string& csv_path, std::ostream& out, std::ostream& err) {
            const EngineConfig config = load_engine_config(config_path);
            const SceneData data = load_scene(scene_dir, config.scene.downsample);
            ScenePlan plan = plan_scene(data, config);

            std::vector<TrainConfig> configs(plan.scene.sub_models.size(), config.train);
            for (std::size_t s = 0; s < configs.size(); ++s) {
                configs[s].seed = config.train.seed + s;
                if (plan.datasets[s].empty()) {
                    configs[s].max_steps = 0;
                    configs[s].recalibrate_norm = false;
                    err << "warning: sub-scene " << s << " has no training frames; left untrained\n";
                }
            }
            const auto outcomes = train_partitioned(plan.scene.sub_models, plan.datasets, configs, true);
            bool failed = false;
            for (std::size_t s = 0; s < outcomes.size(); ++s) {
                if (outcomes[s].error) {
                    err << "error: " << *outcomes[s].error << '\n';
                    failed = true;
                } else if (outcomes[s].result.halted) {
                    err << "warning: sub-scene " << s << " halted: " << outcomes[s].result.diagnostic << '\n';
                }
                const auto& h = outcomes[s].result.history;
                out << "sub-scene " << s << ": " << plan.datasets[s].size() << " frames, " << h.size() << " steps";
                if (!h.empty())
                    out << ", final loss " << h.back().loss;
                out << '\n';
            }
            if (!csv_path.empty()) {
                std::ofstream csv(csv_path);
                if (!csv)
                    throw ParseError("cannot write " + csv_path);
                for (std::size_t s = 0; s < outcomes.size(); ++s) {
                    if (outcomes.size() > 1)
                        csv << "# sub-scene " << s << '\n';
                    write_loss_history(csv, outcomes[s].result.history);
                }
            }
            save_checkpoint(plan.scene, out_path);
            out << "wrote " << out_path << '\n';
            return failed ? 1 : 0;
        }

        int cmd_render(const std::string& ckpt, const std::string& pose_file, const std::string& out_path,
                       std::ostream& out) {
            const SceneModel scene = load_checkpoint(ckpt);
            const Pose pose = parse_pose_json(read_text(pose_file));
            const RenderResult r = render_view_routed(scene, pose);
            save_image(r.image, out_path);
            out << "sub-scene " << r.subscene << ", wrote " << out_path << '\n';
            return 0;
        }

        int cmd_eval(const std::string& ckpt, const std::string& scene_dir, const std::string& csv_path,
                     std::ostream& out) {
            const SceneModel scene = load_checkpoint(ckpt);
            const SceneData data = load_scene(scene_dir, 1);
            const CameraModel& cam = scene.camera();
            std::ofstream file;
            std::ostream* csv = &out;
            if (!csv_path.empty()) {
                file.open(csv_path);
                if (!file)
                    throw ParseError("cannot write " + csv_path);
                csv = &file;
            }
            *csv << "frame,psnr,ssim\n" << std::setprecision(10);
            double psnr_sum = 0.0;
            double ssim_sum = 0.0;
            for (const auto& s : data.samples) {
                if (s.target.width != cam.width || s.target.height != cam.height)
                    throw ParseError("frame '" + s.name + "' does not match the model resolution " +
                                     std::to_string(cam.width) + "x" + std::to_string(cam.height));
                // Compared at the 8-bit precision the images are stored with.
                const ImageBuffer img = quantize_8bit(render_view(scene, s.pose));
                const MetricReport m = evaluate(img, s.target);
                psnr_sum += m.psnr;
                ssim_sum += m.ssim;
                *csv << s.name << ',' << m.psnr << ',' << m.ssim << '\n';
            }
            const double n = static_cast<double>(data.samples.size());
            *csv << "mean," << psnr_sum / n << ',' << ssim_sum / n << '\n';
            return 0;
        }

        int cmd_partition(const std::string& scene_dir, const std::string& mode, const std::string& out_path,
                          const SceneSettings& base, std::ostream& out) {
            const SceneManifest manifest = load_manifest(std::filesystem::path(scene_dir) / "transforms.json");
            SceneSettings settings = base;
            settings.mode = parse_partition_kind(mode);
            if (settings.mode == PartitionKind::frontal)
                throw UsageError("--mode must be prism or kmeans");
            std::vector<Pose> poses;
            std::vector<std::string> names;
            for (const auto& f : manifest.frames) {
                poses.push_back(f.pose);
                names.push_back(f.file_path);
            }
            const ScenePartition partition = build_partition(settings, poses);
            const Assignment assignment = assign_poses(partition, poses);
            const json manifest_json = partition_manifest(partition, assignment, names);
            std::ofstream file(out_path);
            if (!file)
                throw ParseError("cannot write " + out_path);
            file << manifest_json.dump(2) << '\n';
            out << partition.subscene_count() << " sub-scenes, " << poses.size() << " poses assigned, wrote "
                << out_path << '\n';
            return 0;
        }

        int cmd_serve(const std::string& ckpt, const std::string& bind_text, std::ostream& out) {
            const BindAddress addr = parse_bind_address(bind_text);
            RenderService service(load_checkpoint(ckpt));
            const int port = service.bind(addr.host, addr.port);
            out << "listening on " << addr.host << ':' << port << std::endl;
            g_active_service.store(&service);
            auto previous_int = std::signal(SIGINT, handle_stop_signal);
            auto previous_term = std::signal(SIGTERM, handle_stop_signal);
            service.run();
            std::signal(SIGINT, previous_int);
            std::signal(SIGTERM, previous_term);
            g_active_service.store(nullptr);
            return 0;
        }

        int cmd_synth(const std::string& out_dir, const std::string& layout, int size, std::ostream& out) {
            SynthLayout l;
            if (layout == "frontal")
                l = SynthLayout::frontal;
            else if (layout == "orbit")
                l = SynthLayout::orbit;
            else
                throw UsageError("--layout must be frontal or orbit");
            const SynthScene scene = make_synth_scene(l, size);
            write_scene(scene, out_dir);
            out << "wrote " << scene.train.size() << " frames to " << out_dir << '\n';
            return 0;
        }

    } // namespace

    int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
        CLI::App app{"Neural light field engine: train, render, evaluate and serve light slab models"};
        app.name(args.empty() ? "lightslab" : args.front());
        app.require_subcommand(1);

        std::string scene_dir, config_path, out_path, csv_path, ckpt, pose_file, mode, bind_text, layout = "frontal";
        int size = 64;
        SceneSettings part;

        auto* train = app.add_subcommand("train", "Train a scene model and write a checkpoint");
        train->add_option("--scene", scene_dir, "Scene directory with transforms.json")->required();
        train->add_option("--config", config_path, "JSON config")->required();
        train->add_option("--out", out_path, "Output checkpoint")->required();
        train->add_option("--loss-csv", csv_path, "Write the loss history as CSV");

        auto* render = app.add_subcommand("render", "Render one view to PNG");
        render->add_option("--ckpt", ckpt, "Checkpoint")->required();
        render->add_option("--pose-file", pose_file, "JSON pose: {\"pose\": [16 numbers]}")->required();
        render->add_option("--out", out_path, "Output PNG")->required();

        auto* eval = app.add_subcommand("eval", "Per-frame PSNR/SSIM against a scene directory");
        eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
        eval->add_option("--scene", scene_dir, "Scene directory")->required();
        eval->add_option("--out", csv_path, "CSV output (default: stdout)");

        auto* partition = app.add_subcommand("partition", "Partition a scene's poses and write a manifest");
        partition->add_option("--scene", scene_dir, "Scene directory")->required();
        partition->add_option("--mode", mode, "prism or kmeans")->required();
        partition->add_option("--out", out_path, "Output manifest (JSON)")->required();
        partition->add_option("--k", part.k, "Cluster count for kmeans");
        partition->add_option("--overlap-margin", part.overlap_margin, "Relative distance margin for kmeans");
        partition->add_option("--plane-offset", part.plane_offset, "Prism plane offset multiplier");
        partition->add_option("--seed", part.seed, "k-means seed");

        auto* serve = app.add_subcommand("serve", "Serve renders over HTTP");
        serve->add_option("--ckpt", ckpt, "Checkpoint")->required();
        serve->add_option("--bind", bind_text, "host:port")->required();

        auto* synth = app.add_subcommand("synth", "Write the analytic test scene");
        synth->add_option("--out", out_path, "Output directory")->required();
        synth->add_option("--layout", layout, "frontal or orbit");
        synth->add_option("--size", size, "Image width and height");

        std::vector<const char*> argv;
        argv.reserve(args.size() + 1);
        if (args.empty())
            argv.push_back("lightslab");
        for (const auto& a : args)
            argv.push_back(a.c_str());

        try {
            app.parse(static_cast<int>(argv.size()), argv.data());
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::ParseError& e) {
            err << "usage error: " << e.what() << "\n" << app.help();
            return 2;
        }

        try {
            if (*train)
                return cmd_train(scene_dir, config_path, out_path, csv_path, out, err);
            if (*render)
                return cmd_render(ckpt, pose_file, out_path, out);
            if (*eval)
                return cmd_eval(ckpt, scene_dir, csv_path, out);
            if (*partition)
                return cmd_partition(scene_dir, mode, out_path, part, out);
            if (*serve)
                return cmd_serve(ckpt, bind_text, out);
            if (*synth)
                return cmd_synth(out_path, layout, size, out);
        } catch (const UsageError& e) {
            err << "usage error: " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            err << "error: " << e.what() << '\n';
            return 1;
        }
        return 2;
    }

} // namespace lightslab
