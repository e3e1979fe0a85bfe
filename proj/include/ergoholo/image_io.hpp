#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ergoholo/types.hpp"

namespace ergoholo {

/// Decoded PNG samples normalized to [0, 1], channel-interleaved.
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 8;
    std::vector<double> samples;
};

/// Reads 8- or 16-bit gray, gray+alpha, RGB or RGBA PNGs. Alpha is dropped.
PngImage read_png(const std::filesystem::path& path);

/// Writes 8-bit gray (1 channel) or RGB (3 channels) from bytes.
void write_png8(const std::filesystem::path& path, int width, int height, int channels,
                const std::vector<std::uint8_t>& bytes);
void write_png16(const std::filesystem::path& path, int width, int height, int channels,
                 const std::vector<std::uint16_t>& values);

/// Single-channel PFM ("Pf"); an RGB PFM is averaged to gray.
Image read_pfm_gray(const std::filesystem::path& path);
/// Channels of a PFM file, top row first.
std::vector<Image> read_pfm(const std::filesystem::path& path);
void write_pfm(const std::filesystem::path& path, const Image& image);

/// Little-endian float32, row-major.
Image read_raw_f32(const std::filesystem::path& path, int width, int height);
/// Channel-interleaved little-endian float32 of equally sized images.
std::vector<Image> read_raw_f32_interleaved(const std::filesystem::path& path, int width,
                                            int height, int channels);
void write_raw_f32(const std::filesystem::path& path, const std::vector<Image>& channels);

/// Linear values to 8-bit: clip at the given percentile of all samples,
/// then apply 1/gamma.
std::vector<std::uint8_t> tone_map(const std::vector<Image>& channels, double percentile = 99.9,
                                   double gamma = 2.2);

} // namespace ergoholo
