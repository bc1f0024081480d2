/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/errors.hpp"
#include "lightslab/model.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lightslab {

    namespace {

        using nlohmann::json;

        // ---------------------------------------------------------------------------------------------
        // Little-endian byte I/O

        class Writer {
        public:
            void u16(std::uint16_t v) {
                for (int i = 0; i < 2; ++i)
                    bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
            }
            void u32(std::uint32_t v) {
                for (int i = 0; i < 4; ++i)
                    bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
            }
            void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
            void raw(const void* data, std::size_t n) {
                const auto* p = static_cast<const std::uint8_t*>(data);
                bytes.insert(bytes.end(), p, p + n);
            }

            std::vector<std::uint8_t> bytes;
        };

        class Reader {
        public:
            explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

            std::uint16_t u16() {
                need(2, "u16");
                const std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
                pos_ += 2;
                return v;
            }
            std::uint32_t u32() {
                need(4, "u32");
                std::uint32_t v = 0;
                for (int i = 0; i < 4; ++i)
                    v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
                pos_ += 4;
                return v;
            }
            float f32() { return std::bit_cast<float>(u32()); }
            std::string str(std::size_t n, const char* what) {
                need(n, what);
                std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
                pos_ += n;
                return s;
            }
            void need(std::size_t n, const char* what) const {
                if (bytes_.size() - pos_ < n)
                    throw CheckpointError(CheckpointErrorKind::truncated,
                                          std::string("checkpoint truncated while reading ") + what + " at byte " +
                                              std::to_string(pos_));
            }
            std::size_t remaining() const { return bytes_.size() - pos_; }
            std::size_t position() const { return pos_; }

        private:
            std::span<const std::uint8_t> bytes_;
            std::size_t pos_ = 0;
        };

        [[noreturn]] void malformed(const std::string& what) {
            throw CheckpointError(CheckpointErrorKind::malformed, "malformed checkpoint: " + what);
        }

        // ---------------------------------------------------------------------------------------------
        // Metadata

        json camera_json(const CameraModel& c) {
            return {{"width", c.width},         {"height", c.height},           {"focal_x", c.focal_x},
                    {"focal_y", c.focal_y},     {"principal_x", c.principal_x}, {"principal_y", c.principal_y},
                    {"near", c.near}};
        }

        CameraModel camera_from(const json& j) {
            CameraModel c;
            c.width = j.at("width").get<int>();
            c.height = j.at("height").get<int>();
            c.focal_x = j.at("focal_x").get<double>();
            c.focal_y = j.at("focal_y").get<double>();
            c.principal_x = j.at("principal_x").get<double>();
            c.principal_y = j.at("principal_y").get<double>();
            c.near = j.at("near").get<double>();
            return c;
        }

        json param_json(const RayParameterization& p) {
            json j;
            j["kind"] = p.kind == RayParameterization::Kind::ndc ? "ndc" : "slab";
            std::vector<double> rot(9);
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    rot[static_cast<std::size_t>(r * 3 + c)] = p.slab.frame.rotation(r, c);
            j["rotation"] = rot;
            j["translation"] = {p.slab.frame.translation.x(), p.slab.frame.translation.y(),
                                p.slab.frame.translation.z()};
            j["z_near"] = p.slab.z_near;
            j["z_far"] = p.slab.z_far;
            return j;
        }

        RayParameterization param_from(const json& j, const CameraModel& camera) {
            SlabPlanes slab;
            const auto rot = j.at("rotation").get<std::vector<double>>();
            const auto tr = j.at("translation").get<std::vector<double>>();
            if (rot.size() != 9 || tr.size() != 3)
                malformed("slab frame must have 9 rotation and 3 translation values");
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    slab.frame.rotation(r, c) = rot[static_cast<std::size_t>(r * 3 + c)];
            slab.frame.translation = Vec3(tr[0], tr[1], tr[2]);
            slab.z_near = j.at("z_near").get<double>();
            slab.z_far = j.at("z_far").get<double>();
            const std::string kind = j.at("kind").get<std::string>();
            RayParameterization p;
            if (kind == "ndc") {
                p = RayParameterization::ndc(camera);
                p.slab = slab;
            } else if (kind == "slab") {
                p = RayParameterization::rigid(slab);
            } else {
                malformed("unknown parameterization kind '" + kind + "'");
            }
            return p;
        }

        json model_json(const LightFieldModel& m) {
            json j;
            j["camera"] = camera_json(m.camera);
            j["downsample"] = m.downsample;
            j["parameterization"] = param_json(m.parameterization);
            json bounds = json::array();
            for (const auto& b : m.bounds)
                bounds.push_back({b.lo, b.hi});
            j["bounds"] = bounds;
            if (m.encoder_kind == EncoderKind::grid) {
                const auto& e = m.pyramid.config();
                j["encoder"] = {{"kind", "grid"},
                                {"levels", e.levels},
                                {"feature_dim", e.feature_dim},
                                {"min_resolution", e.min_resolution},
                                {"max_resolution", e.max_resolution}};
            } else {
                j["encoder"] = {{"kind", "frequency"}, {"num_freqs", m.num_freqs}};
            }
            const auto& d = m.decoder.config();
            json sr = json::array();
            for (const auto& s : d.sr_modules)
                sr.push_back({{"kernel_size", s.kernel_size}, {"upsample_factor", s.upsample_factor},
                              {"channels", s.channels}});
            j["decoder"] = {{"depth", d.depth}, {"width", d.width}, {"out_channels", d.out_channels}, {"sr_modules", sr}};
            return j;
        }

        ModelSpec spec_from(const json& j) {
            ModelSpec s;
            s.camera = camera_from(j.at("camera"));
            s.downsample = j.at("downsample").get<int>();
            s.parameterization = param_from(j.at("parameterization"), s.camera);
            const auto& b = j.at("bounds");
            if (!b.is_array() || b.size() != 4)
                malformed("bounds must list 4 axes");
            for (std::size_t a = 0; a < 4; ++a)
                s.bounds[a] = {b[a].at(0).get<double>(), b[a].at(1).get<double>()};
            const auto& e = j.at("encoder");
            const std::string kind = e.at("kind").get<std::string>();
            if (kind == "grid") {
                s.encoder_kind = EncoderKind::grid;
                s.encoder.levels = e.at("levels").get<int>();
                s.encoder.feature_dim = e.at("feature_dim").get<int>();
                s.encoder.min_resolution = e.at("min_resolution").get<int>();
                s.encoder.max_resolution = e.at("max_resolution").get<int>();
            } else if (kind == "frequency") {
                s.encoder_kind = EncoderKind::frequency;
                s.num_freqs = e.at("num_freqs").get<int>();
            } else {
                malformed("unknown encoder kind '" + kind + "'");
            }
            const auto& d = j.at("decoder");
            s.decoder.depth = d.at("depth").get<int>();
            s.decoder.width = d.at("width").get<int>();
            s.decoder.out_channels = d.at("out_channels").get<int>();
            for (const auto& st : d.at("sr_modules"))
                s.decoder.sr_modules.push_back({st.at("kernel_size").get<int>(), st.at("upsample_factor").get<int>(),
                                                st.at("channels").get<int>()});
            return s;
        }

        // ---------------------------------------------------------------------------------------------
        // Tensor table

        struct TensorRef {
            std::string name;
            std::vector<std::uint32_t> shape;
            std::span<float> data;
        };

        std::vector<TensorRef> tensor_table(LightFieldModel& m, std::size_t index) {
            const std::string prefix = "model." + std::to_string(index) + ".";
            std::vector<TensorRef> refs;
            if (m.encoder_kind == EncoderKind::grid) {
                const auto& res = m.pyramid.resolutions();
                const auto f = static_cast<std::uint32_t>(m.pyramid.feature_dim());
                for (std::size_t l = 0; l < res.size(); ++l) {
                    const auto n = static_cast<std::uint32_t>(res[l]);
                    for (int p = 0; p < 6; ++p)
                        refs.push_back({prefix + "grid.level" + std::to_string(l) + "." +
                                            kAxisPairNames[static_cast<std::size_t>(p)],
                                        {n, n, f},
                                        m.pyramid.values().subspan(m.pyramid.grid_offset(static_cast<int>(l), p),
                                                                   static_cast<std::size_t>(n) * n * f)});
                }
            }
            for (const auto& slot : m.decoder.params.slots())
                refs.push_back({prefix + "decoder." + slot.name, slot.shape, m.decoder.params.slice(slot.offset, slot.size)});
            for (const auto& slot : m.decoder.buffers.slots())
                refs.push_back({prefix + "buffers." + slot.name, slot.shape, m.decoder.buffers.slice(slot.offset, slot.size)});
            return refs;
        }

        std::string shape_string(const std::vector<std::uint32_t>& s) {
            std::string out = "[";
            for (std::size_t i = 0; i < s.size(); ++i)
                out += (i ? ", " : "") + std::to_string(s[i]);
            return out + "]";
        }

    } // namespace

    std::vector<std::uint8_t> serialize_checkpoint(const SceneModel& scene) {
        scene.validate();
        json meta;
        meta["partition"] = partition_to_json(scene.partition);
        json models = json::array();
        for (const auto& m : scene.sub_models)
            models.push_back(model_json(m));
        meta["models"] = models;
        const std::string meta_text = meta.dump();

        // tensor_table needs mutable spans; the copy is never modified.
        SceneModel copy = scene;
        std::vector<TensorRef> refs;
        for (std::size_t i = 0; i < copy.sub_models.size(); ++i) {
            auto t = tensor_table(copy.sub_models[i], i);
            refs.insert(refs.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
        }

        Writer w;
        w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
        w.u32(kCheckpointVersion);
        w.u32(static_cast<std::uint32_t>(meta_text.size()));
        w.raw(meta_text.data(), meta_text.size());
        w.u32(static_cast<std::uint32_t>(refs.size()));
        for (const auto& r : refs) {
            w.u16(static_cast<std::uint16_t>(r.name.size()));
            w.raw(r.name.data(), r.name.size());
            w.u32(static_cast<std::uint32_t>(r.shape.size()));
            for (auto d : r.shape)
                w.u32(d);
            for (float v : r.data)
                w.f32(v);
        }
        return std::move(w.bytes);
    }

    SceneModel deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
        Reader r(bytes);
        const std::string magic = r.str(sizeof(kCheckpointMagic), "magic");
        if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
            throw CheckpointError(CheckpointErrorKind::bad_magic, "not a lightslab checkpoint (bad magic)");
        const std::uint32_t version = r.u32();
        if (version != kCheckpointVersion)
            throw CheckpointError(CheckpointErrorKind::bad_version,
                                  "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                      std::to_string(kCheckpointVersion) + ")");
        const std::uint32_t meta_len = r.u32();
        const std::string meta_text = r.str(meta_len, "metadata");

        SceneModel scene;
        try {
            const json meta = json::parse(meta_text);
            scene.partition = partition_from_json(meta.at("partition"));
            for (const auto& mj : meta.at("models"))
                scene.sub_models.push_back(make_zero_model(spec_from(mj)));
            scene.validate();
        } catch (const CheckpointError&) {
            throw;
        } catch (const std::exception& e) {
            malformed(std::string("metadata: ") + e.what());
        }

        std::vector<TensorRef> refs;
        for (std::size_t i = 0; i < scene.sub_models.size(); ++i) {
            auto t = tensor_table(scene.sub_models[i], i);
            refs.insert(refs.end(), std::make_move_iterator(t.begin()), std::make_move_iterator(t.end()));
        }
        const std::uint32_t count = r.u32();
        if (count != refs.size())
            throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                                  "checkpoint holds " + std::to_string(count) + " tensors, metadata implies " +
                                      std::to_string(refs.size()));
        for (auto& ref : refs) {
            const std::uint16_t name_len = r.u16();
            const std::string name = r.str(name_len, "tensor name");
            if (name != ref.name)
                throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                                      "expected tensor '" + ref.name + "', found '" + name + "'");
            const std::uint32_t rank = r.u32();
            r.need(static_cast<std::size_t>(rank) * 4, "tensor shape");
            std::vector<std::uint32_t> shape(rank);
            for (auto& d : shape)
                d = r.u32();
            if (shape != ref.shape)
                throw CheckpointError(CheckpointErrorKind::shape_mismatch,
                                      "tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                                          shape_string(ref.shape));
            r.need(ref.data.size() * 4, "tensor data");
            for (float& v : ref.data)
                v = r.f32();
        }
        if (r.remaining() != 0)
            malformed(std::to_string(r.remaining()) + " trailing bytes after the last tensor");
        return scene;
    }

    void save_checkpoint(const SceneModel& scene, const std::filesystem::path& path) {
        const auto bytes = serialize_checkpoint(scene);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw CheckpointError(CheckpointErrorKind::io, "short write to " + path.string());
    }

    SceneModel load_checkpoint(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw CheckpointError(CheckpointErrorKind::io, "cannot open checkpoint " + path.string());
        const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return deserialize_checkpoint(bytes);
    }

} // namespace lightslab
