#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "ergoholo/errors.hpp"
#include "ergoholo/incoherent_render.hpp"
#include "ergoholo/reconstruction_model.hpp"
#include "ergoholo/types.hpp"

namespace ergoholo {

/// Frames of one color channel plus its optimizable global scale.
struct HologramChannel {
    double wavelength = 520e-9;
    std::vector<PhasePattern> frames;
    double global_scale = 1.0;
};

/// Time-multiplexed phase patterns for every color channel.
struct HologramBatch {
    std::vector<HologramChannel> channels;

    int frame_count() const;
    int width() const;
    int height() const;
    double pitch() const;
    void validate() const;
};

/// Non-optimizable scales: the per-pixel illumination profile and one
/// normalization per pupil.
struct ScaleSet {
    /// Empty means uniform illumination.
    Image laser_profile;
    std::vector<double> pupil_scales;
};

struct OptimizerConfig {
    int frames = 5;
    int orders = 3;
    /// Indices into the target focal stack; empty supervises every plane.
    std::vector<int> plane_indices;
    int pupils_total = 25;
    int pupils_fixed = 9;
    int pupils_random = 16;
    double base_radius = 2e-3;
    EyeBox eyebox;
    int iterations = 1000;
    double step_size = 0.02;
    LossNorm loss_norm = LossNorm::l2;
    std::uint64_t seed = 1;

    // Ablations.
    bool disable_pupils = false;
    bool disable_time_multiplexing = false;
    bool disable_high_orders = false;
    bool center_pupil_only = false;

    bool pupil_normalization = true;
    bool sinc_envelope = true;
    ScaleMode scale_mode = ScaleMode::amplitude;
    double pitch = 8e-6;
    double eyepiece_focal_length = 0.08;
    double intensity_floor = 1e-12;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int threads = 0;

    /// Throws InputError on inconsistent values.
    void validate() const;
    /// Copy with the ablation flags folded into frames, orders and pupil counts.
    OptimizerConfig effective() const;
};

/// Fixed grid pupils (same every iteration) followed by random pupils drawn
/// from a generator seeded with (seed, iteration). With disable_pupils the
/// list is a single unfiltered aperture.
std::vector<Aperture> sample_pupils(const OptimizerConfig& config, int iteration);

/// Fixed grid only.
std::vector<PupilSpec> fixed_pupils(const OptimizerConfig& config);

/// Amplitude normalization radius / base_radius.
double pupil_normalization(double radius, double base_radius);

/// Pupil scales for an aperture list under the config's normalization switch.
std::vector<double> pupil_scales(const std::vector<Aperture>& pupils, const OptimizerConfig& config);

struct LossReport {
    double loss = 0.0;
    /// residuals[channel][plane][pupil]
    std::vector<std::vector<std::vector<double>>> residuals;
};

struct BatchGradient {
    double loss = 0.0;
    /// phase[channel][frame][pixel]
    std::vector<std::vector<std::vector<double>>> phase;
    /// d loss / d global_scale per channel
    std::vector<double> global_scale;
};

/// Sum over channels of the mean over (plane, pupil) pairs of the per-pixel
/// amplitude error. `targets` holds intensities at the supervised planes only
/// and one channel per batch channel (matched by wavelength).
LossReport forward_loss(const HologramBatch& batch, const std::vector<Aperture>& pupils,
                        const FocalStack& targets, const ScaleSet& scales,
                        const OptimizerConfig& config);

BatchGradient gradient(const HologramBatch& batch, const std::vector<Aperture>& pupils,
                       const FocalStack& targets, const ScaleSet& scales,
                       const OptimizerConfig& config);

struct LossRecord {
    int iteration = 0;
    double loss = 0.0;
    double best_loss = 0.0;
    double wall_ms = 0.0;
};

struct OptimizeResult {
    HologramBatch batch;
    std::vector<LossRecord> history;
    int best_iteration = -1;
};

/// Raised when the loss turns non-finite; carries the best iterate so far.
class OptimizationDiverged : public NumericalError {
public:
    OptimizationDiverged(const std::string& msg, OptimizeResult partial)
        : NumericalError{msg}, partial_{std::move(partial)} {}
    const OptimizeResult& partial() const { return partial_; }

private:
    OptimizeResult partial_;
};

using ProgressCallback = std::function<void(const LossRecord&)>;

/// Random initial batch: phases uniform in [0, 2 pi), global scale 1.
HologramBatch initial_batch(const OptimizerConfig& config, int width, int height,
                            const std::vector<double>& wavelengths);

/// Gradient descent over all frames and global scales against `targets`
/// (a full focal stack; config.plane_indices selects the supervised planes).
/// Returns the best-loss iterate and the loss trace.
OptimizeResult optimize(const OptimizerConfig& config, const FocalStack& targets,
                        const ScaleSet& scales, const std::optional<HologramBatch>& initial = {},
                        const ProgressCallback& progress = {});

/// Per-pixel illumination map normalized to unit mean; all ones when `path`
/// is empty. Accepts PFM or raw little-endian float32 of width x height.
Image load_laser_profile(const std::filesystem::path& path, int width, int height);
Image normalize_laser_profile(Image profile);

/// Phase wrapped to [0, 2 pi) and rounded to one of 256 levels.
std::uint8_t quantize_phase(double phase);
double dequantize_phase(std::uint8_t level);
HologramBatch quantized(const HologramBatch& batch);

/// Amplitude targets sqrt(I) of one channel, per plane.
std::vector<Image> amplitude_targets(const FocalStack& targets, std::size_t channel);

/// Index of the target channel whose wavelength equals `wavelength`.
std::size_t match_channel(const FocalStack& targets, double wavelength);

ReconstructionModel::Settings model_settings(const OptimizerConfig& config, double wavelength);

} // namespace ergoholo
