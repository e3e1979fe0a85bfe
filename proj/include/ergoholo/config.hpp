#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ergoholo/incoherent_render.hpp"
#include "ergoholo/optimizer.hpp"

namespace ergoholo {

inline constexpr int kConfigSchemaVersion = 1;

struct SceneSection {
    std::filesystem::path ldi;
    /// Overrides the LDI manifest's thickness when set.
    std::optional<double> volume_thickness;
    int plane_count = 32;
    MaskSpec mask;
    int kernel_grid = 0;
    std::optional<double> depth_tolerance;
};

struct OpticsSection {
    double pitch = 8e-6;
    std::vector<double> wavelengths{632e-9, 520e-9, 450e-9};
    int orders = 3;
    double eyepiece_focal_length = 0.08;
    bool sinc_envelope = true;
    /// Empty means uniform illumination.
    std::filesystem::path laser_profile;
};

struct EvalSection {
    int grid_n = 3;
    double radius = 2e-3;
    double sweep_start = 0.0;
    double sweep_end = 4e-3;
    int sweep_steps = 16;
    /// Pupil used for focal sweeps; radius 0 disables the pupil filter.
    double sweep_pupil_x = 0.0;
    double sweep_pupil_y = 0.0;
    double sweep_pupil_radius = 2e-3;
};

struct IoSection {
    std::filesystem::path output_dir = "out";
    bool overwrite = false;
    /// Focal stack directory for optimize/eval.
    std::filesystem::path targets;
    /// Hologram batch directory for eval/sweep.
    std::filesystem::path batch;
};

struct RunConfig {
    int schema_version = kConfigSchemaVersion;
    SceneSection scene;
    OpticsSection optics;
    OptimizerConfig optimize;
    EvalSection eval;
    IoSection io;
    int threads = 0;

    /// Throws InputError on non-positive physical quantities or inconsistent counts.
    void validate() const;
    /// Optimizer settings with the optics section folded in.
    OptimizerConfig optimizer_config() const;
    RenderSettings render_settings() const;
};

/// `count` evenly spaced indices over [0, plane_count), or all of them when
/// plane_count <= count.
std::vector<int> even_plane_indices(int plane_count, int count = 6);

/// Length with an optional unit suffix: m, mm, um, nm. Bare numbers are meters.
double parse_length(const std::string& text);

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const OptimizerConfig& config);
/// Missing keys keep defaults; unknown keys are an InputError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

} // namespace ergoholo
