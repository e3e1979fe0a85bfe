#include "ergoholo/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "ergoholo/errors.hpp"

namespace ergoholo {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f{std::fopen(path.c_str(), mode)};
    if (!f) throw InputError("cannot open " + path.string());
    return f;
}

float read_f32_le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

void put_f32_le(std::ostream& os, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                static_cast<unsigned char>(bits >> 16),
                                static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
    std::ifstream is{path, std::ios::binary};
    if (!is) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>{is}, std::istreambuf_iterator<char>{}};
}

} // namespace

PngImage read_png(const std::filesystem::path& path) {
    auto file = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw InputError(path.string() + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng initialisation failed");
    }
    PngImage out;
    std::vector<png_bytep> rows;
    std::vector<unsigned char> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("failed to decode PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const auto color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    out.bit_depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    pixels.resize(stride * out.height);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = pixels.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
    out.samples.resize(n);
    if (out.bit_depth == 16) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint16_t v;
            std::memcpy(&v, pixels.data() + (i / (out.width * out.channels)) * stride +
                                (i % (out.width * out.channels)) * 2,
                        2);
            out.samples[i] = v / 65535.0;
        }
    } else {
        for (std::size_t i = 0; i < n; ++i)
            out.samples[i] = pixels[(i / (out.width * out.channels)) * stride +
                                    i % (out.width * out.channels)] /
                             255.0;
    }
    return out;
}

namespace {

void write_png_bytes(const std::filesystem::path& path, int width, int height, int channels,
                     int bit_depth, const std::vector<std::uint8_t>& bytes) {
    auto file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("failed to encode PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(bytes.data() + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace

void write_png8(const std::filesystem::path& path, int width, int height, int channels,
                const std::vector<std::uint8_t>& bytes) {
    if (channels != 1 && channels != 3) throw InputError("write_png8: 1 or 3 channels supported");
    if (bytes.size() != static_cast<std::size_t>(width) * height * channels)
        throw InputError("write_png8: byte count does not match the image shape");
    write_png_bytes(path, width, height, channels, 8, bytes);
}

void write_png16(const std::filesystem::path& path, int width, int height, int channels,
                 const std::vector<std::uint16_t>& values) {
    if (channels != 1 && channels != 3) throw InputError("write_png16: 1 or 3 channels supported");
    if (values.size() != static_cast<std::size_t>(width) * height * channels)
        throw InputError("write_png16: value count does not match the image shape");
    std::vector<std::uint8_t> bytes(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        bytes[2 * i] = static_cast<std::uint8_t>(values[i] >> 8);
        bytes[2 * i + 1] = static_cast<std::uint8_t>(values[i] & 0xff);
    }
    write_png_bytes(path, width, height, channels, 16, bytes);
}

std::vector<Image> read_pfm(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    std::size_t pos = 0;
    int fields = 0;
    // Three whitespace-separated header tokens, then one whitespace byte.
    std::string tokens[4];
    while (pos < bytes.size() && fields < 4) {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) tokens[fields] += static_cast<char>(bytes[pos++]);
        ++fields;
        if (fields == 4) break;
    }
    if (fields < 4 || pos >= bytes.size()) throw InputError(path.string() + ": truncated PFM header");
    ++pos;
    int channels;
    if (tokens[0] == "Pf") channels = 1;
    else if (tokens[0] == "PF") channels = 3;
    else throw InputError(path.string() + ": not a PFM file");
    int width = 0;
    int height = 0;
    double scale = 0.0;
    try {
        width = std::stoi(tokens[1]);
        height = std::stoi(tokens[2]);
        scale = std::stod(tokens[3]);
    } catch (const std::exception&) {
        throw InputError(path.string() + ": malformed PFM header");
    }
    if (width <= 0 || height <= 0) throw InputError(path.string() + ": bad PFM dimensions");
    if (scale > 0.0) throw InputError(path.string() + ": big-endian PFM is not supported");
    const std::size_t n = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() - pos < n * 4) throw InputError(path.string() + ": truncated PFM data");

    std::vector<Image> out(channels, Image{width, height});
    for (int row = 0; row < height; ++row) {
        // PFM stores the bottom row first.
        const int y = height - 1 - row;
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                const std::size_t i = (static_cast<std::size_t>(row) * width + x) * channels + c;
                out[c].at(x, y) = read_f32_le(bytes.data() + pos + 4 * i);
            }
    }
    return out;
}

Image read_pfm_gray(const std::filesystem::path& path) {
    auto ch = read_pfm(path);
    if (ch.size() == 1) return ch.front();
    Image g{ch[0].width, ch[0].height};
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data[i] = (ch[0].data[i] + ch[1].data[i] + ch[2].data[i]) / 3.0;
    return g;
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
    std::ofstream os{path, std::ios::binary};
    if (!os) throw InputError("cannot write " + path.string());
    os << "Pf\n" << image.width << " " << image.height << "\n-1.0\n";
    for (int row = 0; row < image.height; ++row) {
        const int y = image.height - 1 - row;
        for (int x = 0; x < image.width; ++x) put_f32_le(os, static_cast<float>(image.at(x, y)));
    }
}

Image read_raw_f32(const std::filesystem::path& path, int width, int height) {
    return read_raw_f32_interleaved(path, width, height, 1).front();
}

std::vector<Image> read_raw_f32_interleaved(const std::filesystem::path& path, int width, int height,
                                            int channels) {
    const auto bytes = slurp(path);
    const std::size_t n = static_cast<std::size_t>(width) * height * channels;
    if (bytes.size() != n * 4)
        throw InputError(path.string() + ": expected " + std::to_string(n * 4) + " bytes of float32, found " +
                         std::to_string(bytes.size()));
    std::vector<Image> out(channels, Image{width, height});
    for (std::size_t i = 0; i < n; ++i) out[i % channels].data[i / channels] = read_f32_le(bytes.data() + 4 * i);
    return out;
}

void write_raw_f32(const std::filesystem::path& path, const std::vector<Image>& channels) {
    if (channels.empty()) throw InputError("write_raw_f32: no channels");
    std::ofstream os{path, std::ios::binary};
    if (!os) throw InputError("cannot write " + path.string());
    const std::size_t n = channels.front().size();
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& c : channels) put_f32_le(os, static_cast<float>(c.data[i]));
}

std::vector<std::uint8_t> tone_map(const std::vector<Image>& channels, double percentile, double gamma) {
    if (channels.empty()) return {};
    std::vector<double> all;
    for (const auto& c : channels) all.insert(all.end(), c.data.begin(), c.data.end());
    std::vector<double> sorted = all;
    const auto rank = static_cast<std::size_t>(
        std::clamp(percentile / 100.0, 0.0, 1.0) * static_cast<double>(sorted.size() - 1));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank), sorted.end());
    const double white = sorted[rank] > 0.0 ? sorted[rank] : 1.0;

    const std::size_t n = channels.front().size();
    std::vector<std::uint8_t> out(n * channels.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const double v = std::clamp(channels[c].data[i] / white, 0.0, 1.0);
            out[i * channels.size() + c] =
                static_cast<std::uint8_t>(std::lround(255.0 * std::pow(v, 1.0 / gamma)));
        }
    return out;
}

} // namespace ergoholo
