/* SPDX-FileCopyrightText: 2026 Lightslab Authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#include "lightslab/errors.hpp"
#include "lightslab/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lightslab {

    ImageBuffer image_from_map(const FeatureMap& map, int index) {
        if (map.c != 3 || index < 0 || index >= map.n)
            throw InvalidArgument("image_from_map: expected an (n, h, w, 3) map");
        ImageBuffer img(map.w, map.h);
        const std::size_t count = img.values.size();
        std::copy_n(map.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(index) * count), count,
                    img.values.begin());
        return img;
    }

    FeatureMap map_from_images(std::span<const ImageBuffer> images) {
        if (images.empty())
            throw InvalidArgument("map_from_images: no images");
        const ImageBuffer& first = images.front();
        FeatureMap map(static_cast<int>(images.size()), first.height, first.width, 3);
        std::size_t k = 0;
        for (const auto& img : images) {
            if (!img.same_shape(first))
                throw InvalidArgument("map_from_images: images differ in size");
            std::copy(img.values.begin(), img.values.end(), map.data.begin() + static_cast<std::ptrdiff_t>(k));
            k += img.values.size();
        }
        return map;
    }

    ImageBuffer quantize_8bit(const ImageBuffer& image) {
        ImageBuffer out = image;
        for (double& v : out.values)
            v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        return out;
    }

    namespace {

        struct MemoryReader {
            std::span<const std::uint8_t> bytes;
            std::size_t pos = 0;
        };

        void read_from_memory(png_structp png, png_bytep out, png_size_t count) {
            auto* reader = static_cast<MemoryReader*>(png_get_io_ptr(png));
            if (reader->pos + count > reader->bytes.size())
                png_error(png, "unexpected end of PNG data");
            std::memcpy(out, reader->bytes.data() + reader->pos, count);
            reader->pos += count;
        }

        void write_to_vector(png_structp png, png_bytep data, png_size_t count) {
            auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
            out->insert(out->end(), data, data + count);
        }

        void flush_noop(png_structp) {}

        struct ErrorSink {
            char message[256] = {};
        };

        // libpng is C; errors leave through longjmp back into `guarded`, never through exceptions.
        void on_error(png_structp png, png_const_charp msg) {
            auto* sink = static_cast<ErrorSink*>(png_get_error_ptr(png));
            std::snprintf(sink->message, sizeof(sink->message), "%s", msg);
            png_longjmp(png, 1);
        }

        void ignore_warning(png_structp, png_const_charp) {}

        // Runs `f` under a libpng error trap. `f` must not own objects with destructors.
        template <class F>
        bool guarded(png_structp png, F&& f) {
            if (setjmp(png_jmpbuf(png)))
                return false;
            f();
            return true;
        }

        class ReadGuard {
        public:
            ReadGuard() {
                png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, ignore_warning);
                if (!png_)
                    throw CodecError("png: cannot create read struct");
                info_ = png_create_info_struct(png_);
                if (!info_) {
                    png_destroy_read_struct(&png_, nullptr, nullptr);
                    throw CodecError("png: cannot create info struct");
                }
            }
            ~ReadGuard() { png_destroy_read_struct(&png_, &info_, nullptr); }
            ReadGuard(const ReadGuard&) = delete;
            ReadGuard& operator=(const ReadGuard&) = delete;
            png_structp png() const { return png_; }
            png_infop info() const { return info_; }
            [[noreturn]] void fail() const { throw CodecError(std::string("png: ") + sink.message); }

            ErrorSink sink;

        private:
            png_structp png_ = nullptr;
            png_infop info_ = nullptr;
        };

        class WriteGuard {
        public:
            WriteGuard() {
                png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, on_error, ignore_warning);
                if (!png_)
                    throw CodecError("png: cannot create write struct");
                info_ = png_create_info_struct(png_);
                if (!info_) {
                    png_destroy_write_struct(&png_, nullptr);
                    throw CodecError("png: cannot create info struct");
                }
            }
            ~WriteGuard() { png_destroy_write_struct(&png_, &info_); }
            WriteGuard(const WriteGuard&) = delete;
            WriteGuard& operator=(const WriteGuard&) = delete;
            png_structp png() const { return png_; }
            png_infop info() const { return info_; }
            [[noreturn]] void fail() const { throw CodecError(std::string("png: ") + sink.message); }

            ErrorSink sink;

        private:
            png_structp png_ = nullptr;
            png_infop info_ = nullptr;
        };

    } // namespace

    ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
        if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0)
            throw CodecError("png: missing PNG signature");
        ReadGuard guard;
        png_structp png = guard.png();
        png_infop info = guard.info();
        MemoryReader reader{bytes, 0};
        png_set_read_fn(png, &reader, read_from_memory);

        int color_type = 0;
        int bit_depth = 0;
        if (!guarded(png, [&] {
                png_read_info(png, info);
                color_type = png_get_color_type(png, info);
                bit_depth = png_get_bit_depth(png, info);
            }))
            guard.fail();
        if (color_type != PNG_COLOR_TYPE_PALETTE && bit_depth != 8 && bit_depth != 16)
            throw CodecError("png: unsupported bit depth " + std::to_string(bit_depth) + " (need 8 or 16)");

        if (!guarded(png, [&] {
                if (color_type == PNG_COLOR_TYPE_PALETTE)
                    png_set_palette_to_rgb(png);
                if (png_get_valid(png, info, PNG_INFO_tRNS))
                    png_set_tRNS_to_alpha(png);
                png_set_interlace_handling(png);
                png_read_update_info(png, info);
            }))
            guard.fail();

        const int width = static_cast<int>(png_get_image_width(png, info));
        const int height = static_cast<int>(png_get_image_height(png, info));
        const int channels = png_get_channels(png, info);
        const int depth = png_get_bit_depth(png, info);
        const std::size_t rowbytes = png_get_rowbytes(png, info);

        std::vector<std::uint8_t> raw(rowbytes * static_cast<std::size_t>(height));
        std::vector<png_bytep> rows(static_cast<std::size_t>(height));
        for (int y = 0; y < height; ++y)
            rows[static_cast<std::size_t>(y)] = raw.data() + rowbytes * static_cast<std::size_t>(y);
        if (!guarded(png, [&] {
                png_read_image(png, rows.data());
                png_read_end(png, nullptr);
            }))
            guard.fail();

        const double maxval = depth == 16 ? 65535.0 : 255.0;
        auto sample = [&](int y, int x, int c) {
            const std::uint8_t* row = rows[static_cast<std::size_t>(y)];
            const std::size_t idx = static_cast<std::size_t>(x) * channels + c;
            if (depth == 16)
                return ((row[2 * idx] << 8) | row[2 * idx + 1]) / maxval;
            return row[idx] / maxval;
        };

        const bool has_alpha = channels == 2 || channels == 4;
        const bool gray = channels <= 2;
        ImageBuffer img(width, height);
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double alpha = has_alpha ? sample(y, x, channels - 1) : 1.0;
                for (int c = 0; c < 3; ++c) {
                    const double v = sample(y, x, gray ? 0 : c);
                    // Alpha composited over a white background.
                    img.at(y, x, c) = has_alpha ? v * alpha + (1.0 - alpha) : v;
                }
            }
        }
        return img;
    }

    std::vector<std::uint8_t> encode_png_raw(int width, int height, int color_type, int bit_depth,
                                             std::span<const std::uint16_t> samples) {
        int channels = 0;
        switch (color_type) {
        case PNG_COLOR_TYPE_GRAY: channels = 1; break;
        case PNG_COLOR_TYPE_GRAY_ALPHA: channels = 2; break;
        case PNG_COLOR_TYPE_RGB: channels = 3; break;
        case PNG_COLOR_TYPE_RGB_ALPHA: channels = 4; break;
        default: throw CodecError("png: unsupported color type for encoding");
        }
        if (samples.size() != static_cast<std::size_t>(width) * height * channels)
            throw InvalidArgument("encode_png_raw: sample count mismatch");

        WriteGuard guard;
        png_structp png = guard.png();
        png_infop info = guard.info();
        std::vector<std::uint8_t> out;
        const int bytes_per_sample = bit_depth == 16 ? 2 : 1;
        const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
        std::vector<std::uint8_t> rows(row_samples * bytes_per_sample * static_cast<std::size_t>(height));
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const std::uint16_t s = samples[i];
            if (bytes_per_sample == 2) {
                rows[2 * i] = static_cast<std::uint8_t>(s >> 8);
                rows[2 * i + 1] = static_cast<std::uint8_t>(s & 0xff);
            } else {
                rows[i] = static_cast<std::uint8_t>(s);
            }
        }

        png_set_write_fn(png, &out, write_to_vector, flush_noop);
        if (!guarded(png, [&] {
                png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                             color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
                png_write_info(png, info);
                if (bit_depth < 8)
                    png_set_packing(png);
                for (int y = 0; y < height; ++y)
                    png_write_row(png, rows.data() + static_cast<std::size_t>(y) * row_samples * bytes_per_sample);
                png_write_end(png, nullptr);
            }))
            guard.fail();
        return out;
    }

    std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
        std::vector<std::uint16_t> samples(image.values.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
            samples[i] = static_cast<std::uint16_t>(std::lround(std::clamp(image.values[i], 0.0, 1.0) * 255.0));
        return encode_png_raw(image.width, image.height, PNG_COLOR_TYPE_RGB, 8, samples);
    }

    ImageBuffer load_image(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw CodecError("cannot open image " + path.string());
        const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        try {
            return decode_png(bytes);
        } catch (const CodecError& e) {
            throw CodecError(path.string() + ": " + e.what());
        }
    }

    void save_image(const ImageBuffer& image, const std::filesystem::path& path) {
        const auto bytes = encode_png(image);
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw CodecError("cannot write image " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw CodecError("short write to " + path.string());
    }

} // namespace lightslab
