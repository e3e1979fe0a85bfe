#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ergoholo/incoherent_render.hpp"
#include "ergoholo/optimizer.hpp"
#include "ergoholo/wave_optics.hpp"

namespace ergoholo {

struct PsnrValue {
    double db = 0.0;
    /// MSE was exactly zero; db is +inf.
    bool identical = false;
};

/// 10 log10(peak^2 / MSE) with `target` as the reference.
PsnrValue psnr(const Image& image, const Image& target, double peak);

/// Pixel-replicated upsampling onto the orders-times supersampled grid, using
/// the same pixel-to-sample alignment as the reconstruction model.
Image upsample_nearest(const Image& image, int orders);

/// Eye-view amplitude stack of `batch` through `pupil` at `plane_depths`,
/// on the supersampled grid, one channel per batch channel. This is the
/// quantity the loss compares against sqrt(target intensity).
FocalStack simulate_reconstruction(const HologramBatch& batch, const Aperture& pupil,
                                   const std::vector<double>& plane_depths, const ScaleSet& scales,
                                   const OptimizerConfig& config);

/// Per-plane PSNR of a simulated amplitude stack against an intensity target
/// stack: each channel is compared as amplitudes scaled so the target peak is
/// 1, and the channel PSNRs are averaged.
std::vector<double> stack_psnr(const FocalStack& amplitudes, const FocalStack& intensity_targets,
                               int orders);

/// Band-limited angular-spectrum propagation by direct summation over all
/// frequencies and samples, no FFT. Refuses grids beyond 16x16.
ComplexField dft_oracle(const ComplexField& field, double distance, Padding padding = Padding::none);

struct SweepFrame {
    double depth = 0.0;
    std::vector<Image> amplitude;
};

/// `steps` reconstructions at evenly spaced depths from z_start to z_end
/// inclusive, in that order.
std::vector<SweepFrame> focal_sweep(const HologramBatch& batch, const Aperture& pupil, double z_start,
                                    double z_end, int steps, const ScaleSet& scales,
                                    const OptimizerConfig& config);

/// "frame_0007.png" style name, zero-padded to the width of steps - 1.
std::string sweep_frame_name(int index, int steps, const std::string& extension = ".png");

/// Sum of squared forward differences, a focus measure.
double gradient_energy(const Image& image);

struct PupilCell {
    int row = 0;
    int col = 0;
    PupilSpec pupil;
    /// PSNR per supervised plane, then their mean.
    std::vector<double> plane_psnr;
    double psnr = 0.0;
};

struct MetricReport {
    std::vector<double> plane_depths;
    /// Mean over cells, per plane.
    std::vector<double> plane_psnr;
    int grid_n = 0;
    double radius = 0.0;
    std::vector<PupilCell> cells;
    double min_psnr = std::numeric_limits<double>::quiet_NaN();
    double mean_psnr = std::numeric_limits<double>::quiet_NaN();
    double max_psnr = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> loss_values;
    double runtime_ms = 0.0;
};

/// Centers of a grid_n x grid_n lattice of radius-`radius` pupils spanning
/// the eye box (inset by the radius), row-major from the lowest y.
std::vector<PupilSpec> pupil_lattice(const EyeBox& eyebox, int grid_n, double radius);

/// PSNR at every lattice pupil against the supervised `targets`.
MetricReport eyebox_sweep(const HologramBatch& batch, const FocalStack& targets, int grid_n,
                          double radius, const ScaleSet& scales, const OptimizerConfig& config);

struct OracleResult {
    std::string name;
    /// Worst observed error.
    double value = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    double seconds = 0.0;
};

/// propagate vs dft_oracle on `fields` random 8x8 fields: max abs difference.
OracleResult propagate_oracle_suite(int fields = 20, std::uint64_t seed = 7, double tolerance = 1e-10);

/// Analytic gradient vs central differences on `configs` random 16x16,
/// two-frame, two-plane, two-pupil problems alternating orders 1 and 3:
/// worst relative error over sampled phase entries and the global scales.
OracleResult gradient_oracle_suite(int configs = 5, std::uint64_t seed = 11, double tolerance = 1e-4);

} // namespace ergoholo
