#pragma once

#include <memory>
#include <span>
#include <vector>

#include "ergoholo/fft.hpp"
#include "ergoholo/types.hpp"

namespace ergoholo {

class KernelCache;

enum class LossNorm { l2, l1 };

/// How the global scale and laser profile enter the SLM field.
///   amplitude: field = sigma_g * laser * exp(i phi)
///   phase:     field = exp(i sigma_g * laser * phi)
enum class ScaleMode { amplitude, phase };

/// Per-row column spans of the frequency samples a pupil passes, and the
/// natural-order columns they touch (ascending). Span rows are natural-order
/// indices; span columns are signed indices, inclusive.
struct PupilFootprint {
    struct Span {
        int row;
        int col_lo;
        int col_hi;
    };
    std::vector<Span> spans;
    std::vector<int> cols;
};

/// Time-multiplexed, pupil-filtered, high-order reconstruction of one color
/// channel at a fixed list of planes, with the multi-pupil amplitude loss and
/// its exact adjoint gradient.
///
/// Per frame t, plane k and pupil q the eye sees
///   u = F^-1{ tile(F{g_t}) * H_k * sinc * A_q } / (W H)
/// on the orders-times supersampled grid, and the loss compares
/// sqrt(mean_t |u|^2) / sigma_pupil with the target amplitude, each SLM pixel
/// covering an orders x orders block of the supersampled grid.
class ReconstructionModel {
public:
    struct Settings {
        int orders = 3;
        double pitch = 8e-6;
        double wavelength = 520e-9;
        double eyepiece_focal_length = 0.08;
        bool sinc_envelope = true;
        ScaleMode scale_mode = ScaleMode::amplitude;
        LossNorm norm = LossNorm::l2;
        double intensity_floor = 1e-12;
        int threads = 1;
        Planning planning = Planning::estimate;
    };

    struct Evaluation {
        double loss = 0.0;
        /// pair_loss[k][q] for plane k, pupil q.
        std::vector<std::vector<double>> pair_loss;
        /// phase_grad[t][pixel]; empty unless a gradient was requested.
        std::vector<std::vector<double>> phase_grad;
        double scale_grad = 0.0;
    };

    ReconstructionModel(int width, int height, std::vector<double> plane_depths,
                        const Settings& settings, KernelCache* cache = nullptr);
    ReconstructionModel(ReconstructionModel&&) noexcept;
    ReconstructionModel& operator=(ReconstructionModel&&) noexcept;
    ~ReconstructionModel();

    int width() const { return width_; }
    int height() const { return height_; }
    int grid_width() const { return grid_.width; }
    int grid_height() const { return grid_.height; }
    const FrequencyGrid& grid() const { return grid_; }
    const Settings& settings() const { return settings_; }
    const std::vector<double>& plane_depths() const { return plane_depths_; }

    PupilFootprint footprint(const Aperture& aperture) const;

    /// SLM field of one frame; `laser` may be empty (uniform illumination).
    std::vector<cplx> slm_field(const PhasePattern& frame, double global_scale,
                                const Image& laser) const;

    /// Multi-pupil amplitude loss, optionally with gradients.
    /// `targets[k]` is the amplitude target of plane k at SLM resolution.
    /// Calls on one model are serialized; they share scratch buffers.
    Evaluation evaluate(std::span<const PhasePattern> frames, double global_scale,
                        const Image& laser, std::span<const Aperture> pupils,
                        std::span<const double> pupil_scales, std::span<const Image> targets,
                        bool want_gradient) const;

    /// Eye-view amplitude sqrt(mean_t |u|^2) / pupil_scale per plane on the
    /// supersampled grid, exactly as the loss sees it.
    std::vector<Image> amplitudes(std::span<const PhasePattern> frames, double global_scale,
                                  const Image& laser, const Aperture& aperture,
                                  double pupil_scale) const;

    /// Nearest SLM pixel index for a supersampled sample index along one axis.
    int slm_index(int sample, int slm_extent) const;

private:
    struct Scratch;
    struct ScratchPool;

    void fill_spectrum(std::vector<cplx>& buf, const std::vector<cplx>& base,
                       const std::vector<cplx>& weight, const PupilFootprint& fp) const;
    /// Writes the pupil's samples of tile(base) * weight, leaving the rest.
    void write_spans(std::vector<cplx>& buf, const std::vector<cplx>& base,
                     const std::vector<cplx>& weight, const PupilFootprint& fp) const;

    int width_;
    int height_;
    std::vector<double> plane_depths_;
    Settings settings_;
    FrequencyGrid grid_;
    std::shared_ptr<const Fft2d> base_fft_;
    std::shared_ptr<const Fft2d> grid_fft_;
    /// H_k times the sinc envelope, per plane, on the supersampled grid.
    std::vector<std::vector<cplx>> weights_;
    std::vector<int> base_col_;
    std::vector<int> base_row_;
    std::vector<int> slm_col_;
    std::vector<int> slm_row_;
    std::unique_ptr<ScratchPool> pool_;
};

} // namespace ergoholo
