#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "ergoholo/evalsuite.hpp"
#include "ergoholo/incoherent_render.hpp"
#include "ergoholo/optimizer.hpp"

namespace ergoholo {

inline constexpr int kManifestSchemaVersion = 1;

/// Reads an LDI from a directory holding manifest.json, or from the manifest
/// path itself. Layer files are resolved relative to the manifest.
LayeredDepthImage load_ldi(const std::filesystem::path& path);

/// Writes 16-bit color PNGs encoded with 1/gamma, PFM depths in meters,
/// 8-bit validity masks and manifest.json.
void save_ldi(const std::filesystem::path& dir, const LayeredDepthImage& ldi, double gamma = 2.2);

/// plane_NNN.png (tone-mapped), plane_NNN.f32 (interleaved float32) and stack.json.
void save_focal_stack(const std::filesystem::path& dir, const FocalStack& stack);
FocalStack load_focal_stack(const std::filesystem::path& dir);

struct BatchManifest {
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<PupilSpec> fixed_pupils;
    int random_pupils = 0;
    int best_iteration = -1;
};

/// One 8-bit phase PNG per (frame, channel) plus batch.json.
void save_batch(const std::filesystem::path& dir, const HologramBatch& batch, const BatchManifest& manifest);
/// Dequantized phases; values lie on the 256-level lattice.
HologramBatch load_batch(const std::filesystem::path& dir);
nlohmann::json load_batch_manifest(const std::filesystem::path& dir);

/// Header plus one row per record; zero records still write the header.
void save_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& history);

nlohmann::json to_json(const MetricReport& report);
MetricReport metric_report_from_json(const nlohmann::json& j);
void save_metric_report(const std::filesystem::path& path, const MetricReport& report);
/// row,col,center_x,center_y,radius,psnr
void save_psnr_grid_csv(const std::filesystem::path& path, const MetricReport& report);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace ergoholo
