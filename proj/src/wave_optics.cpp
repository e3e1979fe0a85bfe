#include "ergoholo/wave_optics.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <spdlog/spdlog.h>

#include "ergoholo/errors.hpp"
#include "ergoholo/fft.hpp"

namespace ergoholo {

namespace {

void require_finite(const ComplexField& field) {
    for (const auto& v : field.data)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw InputError("propagate: field contains non-finite samples");
}

int positive_mod(int a, int n) {
    int r = a % n;
    return r < 0 ? r + n : r;
}

} // namespace

double sinc(double x) {
    if (std::abs(x) < 1e-8) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

FrequencyGrid supersampled_grid(int width, int height, double pitch, int orders) {
    return FrequencyGrid{orders * width, orders * height, pitch / orders, orders};
}

PropagationKernel coherent_kernel(const FrequencyGrid& grid, double wavelength, double distance) {
    if (!(wavelength > 0.0)) throw InputError("coherent_kernel: wavelength must be positive");
    PropagationKernel k{distance, wavelength, grid, std::vector<cplx>(grid.size()), true};
    const double inv_l2 = 1.0 / (wavelength * wavelength);
    const double k0 = 2.0 * std::numbers::pi / wavelength;
    for (int j = 0; j < grid.height; ++j) {
        const double fy = grid.fy(j);
        for (int i = 0; i < grid.width; ++i) {
            const double fx = grid.fx(i);
            const double f2 = fx * fx + fy * fy;
            auto& v = k.values[static_cast<std::size_t>(j) * grid.width + i];
            if (f2 >= inv_l2) {
                v = 0.0;
                continue;
            }
            const double kz = k0 * std::sqrt(1.0 - wavelength * wavelength * f2);
            v = std::polar(1.0, kz * distance);
        }
    }
    return k;
}

ComplexField propagate(const ComplexField& field, double distance, Padding padding) {
    field.validate();
    require_finite(field);

    const int pad = padding == Padding::twofold ? 2 : 1;
    const int w = field.width * pad;
    const int h = field.height * pad;
    const int ox = (w - field.width) / 2;
    const int oy = (h - field.height) / 2;

    std::vector<cplx> buf(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < field.height; ++y)
        for (int x = 0; x < field.width; ++x)
            buf[static_cast<std::size_t>(y + oy) * w + x + ox] = field.at(x, y);

    const auto fft = Fft2d::shared(w, h);
    fft->forward(buf);
    const auto kernel = coherent_kernel(FrequencyGrid::of(w, h, field.pitch), field.wavelength, distance);
    const double norm = 1.0 / (static_cast<double>(w) * h);
    for (std::size_t n = 0; n < buf.size(); ++n) buf[n] *= kernel.values[n] * norm;
    fft->inverse(buf);

    ComplexField out{field.width, field.height, field.pitch, field.wavelength};
    for (int y = 0; y < field.height; ++y)
        for (int x = 0; x < field.width; ++x)
            out.at(x, y) = buf[static_cast<std::size_t>(y + oy) * w + x + ox];
    return out;
}

Spectrum base_spectrum(const ComplexField& slm_field) {
    slm_field.validate();
    Spectrum s{FrequencyGrid::of(slm_field.width, slm_field.height, slm_field.pitch), slm_field.data};
    Fft2d::shared(slm_field.width, slm_field.height)->forward(s.values);
    return s;
}

Spectrum high_order_spectrum(const ComplexField& slm_field, int orders) {
    if (orders < 1 || orders % 2 == 0)
        throw InputError("high_order_spectrum: orders must be a positive odd integer, got " +
                         std::to_string(orders));
    const Spectrum base = base_spectrum(slm_field);
    if (orders == 1) return base;

    const int n = slm_field.width;
    const int m = slm_field.height;
    Spectrum out{supersampled_grid(n, m, slm_field.pitch, orders), {}};
    const int big_w = out.grid.width;
    const int big_h = out.grid.height;
    out.values.resize(out.grid.size());
    for (int j = 0; j < big_h; ++j) {
        const int src_j = positive_mod(FrequencyGrid::signed_index(j, big_h), m);
        for (int i = 0; i < big_w; ++i) {
            const int src_i = positive_mod(FrequencyGrid::signed_index(i, big_w), n);
            out.values[static_cast<std::size_t>(j) * big_w + i] =
                base.values[static_cast<std::size_t>(src_j) * n + src_i];
        }
    }
    return out;
}

ComplexField phase_to_field(const PhasePattern& phase, double wavelength) {
    ComplexField f{phase.width, phase.height, phase.pitch, wavelength};
    for (std::size_t n = 0; n < phase.phase.size(); ++n) f.data[n] = std::polar(1.0, phase.phase[n]);
    return f;
}

Spectrum high_order_spectrum(const PhasePattern& phase, int orders) {
    // Wavelength does not enter the spectrum; any positive value validates.
    return high_order_spectrum(phase_to_field(phase, 1.0), orders);
}

std::vector<double> sinc_envelope(const FrequencyGrid& grid, double pitch) {
    if (!(pitch > 0.0)) throw InputError("sinc_envelope: pitch must be positive");
    std::vector<double> wx(grid.width);
    std::vector<double> wy(grid.height);
    for (int i = 0; i < grid.width; ++i) wx[i] = sinc(std::numbers::pi * grid.fx(i) * pitch);
    for (int j = 0; j < grid.height; ++j) wy[j] = sinc(std::numbers::pi * grid.fy(j) * pitch);
    std::vector<double> out(grid.size());
    for (int j = 0; j < grid.height; ++j)
        for (int i = 0; i < grid.width; ++i)
            out[static_cast<std::size_t>(j) * grid.width + i] = wx[i] * wy[j];
    return out;
}

std::vector<std::uint8_t> pupil_mask(const PupilSpec& pupil, double wavelength,
                                     double eyepiece_focal_length, const FrequencyGrid& grid) {
    if (!(eyepiece_focal_length > 0.0))
        throw InputError("pupil_mask: eyepiece focal length must be positive");
    if (!(wavelength > 0.0)) throw InputError("pupil_mask: wavelength must be positive");
    const double scale = 1.0 / (wavelength * eyepiece_focal_length);
    const double cx = pupil.center_x * scale;
    const double cy = pupil.center_y * scale;
    const double r = pupil.radius * scale;

    const double fx_lo = grid.fx(grid.width / 2);
    const double fy_lo = grid.fy(grid.height / 2);
    const double fx_hi = grid.fx((grid.width - 1) / 2);
    const double fy_hi = grid.fy((grid.height - 1) / 2);
    if (cx - r < fx_lo || cx + r > fx_hi || cy - r < fy_lo || cy + r > fy_hi)
        spdlog::warn("pupil disk (center {:.3g},{:.3g} m, radius {:.3g} m) extends past the "
                     "frequency grid",
                     pupil.center_x, pupil.center_y, pupil.radius);

    std::vector<std::uint8_t> mask(grid.size(), 0);
    const double r2 = r * r;
    for (int j = 0; j < grid.height; ++j) {
        const double dy = grid.fy(j) - cy;
        for (int i = 0; i < grid.width; ++i) {
            const double dx = grid.fx(i) - cx;
            if (dx * dx + dy * dy < r2) mask[static_cast<std::size_t>(j) * grid.width + i] = 1;
        }
    }
    return mask;
}

ComplexField reconstruct_plane(const ComplexField& slm_field, const Aperture& aperture,
                               double distance, const OpticsSettings& settings) {
    if (!(settings.pitch > 0.0)) throw InputError("reconstruct_plane: pitch must be positive");
    ComplexField slm = slm_field;
    slm.pitch = settings.pitch;
    slm.wavelength = settings.wavelength;
    Spectrum spec = high_order_spectrum(slm, settings.orders);

    const auto kernel = coherent_kernel(spec.grid, settings.wavelength, distance);
    for (std::size_t n = 0; n < spec.values.size(); ++n) spec.values[n] *= kernel.values[n];
    if (settings.sinc_envelope) {
        const auto env = sinc_envelope(spec.grid, settings.pitch);
        for (std::size_t n = 0; n < spec.values.size(); ++n) spec.values[n] *= env[n];
    }
    if (aperture) {
        const auto mask = pupil_mask(*aperture, settings.wavelength,
                                     settings.eyepiece_focal_length, spec.grid);
        for (std::size_t n = 0; n < spec.values.size(); ++n)
            if (!mask[n]) spec.values[n] = 0.0;
    }

    Fft2d::shared(spec.grid.width, spec.grid.height)->inverse(spec.values);
    const double norm = 1.0 / (static_cast<double>(slm.width) * slm.height);
    ComplexField out{spec.grid.width, spec.grid.height, spec.grid.pitch, settings.wavelength};
    for (std::size_t n = 0; n < out.data.size(); ++n) out.data[n] = spec.values[n] * norm;
    return out;
}

ComplexField reconstruct_plane(const PhasePattern& phase, const Aperture& aperture,
                               double distance, const OpticsSettings& settings) {
    return reconstruct_plane(phase_to_field(phase, settings.wavelength), aperture, distance,
                             settings);
}

} // namespace ergoholo
