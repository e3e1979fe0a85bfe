#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

namespace ergoholo {

using cplx = std::complex<double>;

/// Real-valued single-channel raster, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width{w}, height{h}, data(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    double sum() const;
    double max() const;
};

/// Sampled complex wavefront. `pitch` is the physical sample spacing in meters.
struct ComplexField {
    int width = 0;
    int height = 0;
    double pitch = 0.0;
    double wavelength = 0.0;
    std::vector<cplx> data;

    ComplexField() = default;
    ComplexField(int w, int h, double pitch_m, double wavelength_m, cplx fill = {});

    cplx& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    cplx at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }

    /// Throws InputError when the metadata or sample count is inconsistent.
    void validate() const;
    double energy() const;
};

/// Frequency sampling of a width x height grid with sample spacing `pitch`.
/// Indices are in FFT-natural order: index 0 is zero frequency, the upper half
/// holds negative frequencies.
struct FrequencyGrid {
    int width = 0;
    int height = 0;
    double pitch = 0.0;
    int supersample = 1;

    static FrequencyGrid of(int w, int h, double pitch_m, int supersample_factor = 1) {
        return FrequencyGrid{w, h, pitch_m, supersample_factor};
    }

    /// Signed integer frequency index for natural-order position i of n.
    static int signed_index(int i, int n) { return i < (n + 1) / 2 ? i : i - n; }

    double dfx() const { return 1.0 / (width * pitch); }
    double dfy() const { return 1.0 / (height * pitch); }
    double fx(int i) const { return signed_index(i, width) * dfx(); }
    double fy(int j) const { return signed_index(j, height) * dfy(); }
    std::size_t size() const { return static_cast<std::size_t>(width) * height; }
};

/// Phase-only SLM pattern in radians. Phases are kept unwrapped while
/// optimizing; wrapping and 8-bit quantization happen on export.
struct PhasePattern {
    int width = 0;
    int height = 0;
    double pitch = 8e-6;
    std::vector<double> phase;

    PhasePattern() = default;
    PhasePattern(int w, int h, double pitch_m, double fill = 0.0)
        : width{w}, height{h}, pitch{pitch_m}, phase(static_cast<std::size_t>(w) * h, fill) {}

    std::size_t size() const { return phase.size(); }
};

enum class PupilKind { fixed, random };

/// Circular pupil in eye-box coordinates (meters at the Fourier plane).
struct PupilSpec {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 2e-3;
    PupilKind kind = PupilKind::fixed;
};

/// A pupil, or no iris at all (unfiltered mode).
using Aperture = std::optional<PupilSpec>;

/// Rectangular eye box in meters.
struct EyeBox {
    double x_min = -4e-3;
    double y_min = -4e-3;
    double x_max = 4e-3;
    double y_max = 4e-3;
};

} // namespace ergoholo
