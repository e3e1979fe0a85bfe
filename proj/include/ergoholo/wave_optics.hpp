#pragma once

#include <cstdint>
#include <vector>

#include "ergoholo/types.hpp"

namespace ergoholo {

/// Band-limited angular-spectrum transfer function sampled on a frequency grid.
struct PropagationKernel {
    double distance = 0.0;
    double wavelength = 0.0;
    FrequencyGrid grid;
    std::vector<cplx> values;
    bool band_limited = true;
};

/// Complex spectrum on a (possibly supersampled) frequency grid, natural order.
struct Spectrum {
    FrequencyGrid grid;
    std::vector<cplx> values;
};

/// Optical parameters shared by the reconstruction path.
struct OpticsSettings {
    int orders = 3;
    double pitch = 8e-6;
    double wavelength = 520e-9;
    double eyepiece_focal_length = 0.08;
    bool sinc_envelope = true;
};

enum class Padding { none, twofold };

double sinc(double x);

/// Grid of an `orders`-times supersampled reconstruction of a width x height
/// SLM with pixel pitch `pitch`: same frequency spacing, `orders` times the
/// frequency extent.
FrequencyGrid supersampled_grid(int width, int height, double pitch, int orders);

/// H(fx, fy) = exp(i 2pi/lambda sqrt(1 - (lambda fx)^2 - (lambda fy)^2) d) inside
/// the propagating band sqrt(fx^2 + fy^2) < 1/lambda, zero outside.
PropagationKernel coherent_kernel(const FrequencyGrid& grid, double wavelength, double distance);

/// Angular-spectrum propagation by `distance` (meters, signed). With
/// Padding::twofold the field is zero-padded to twice its size before the
/// transform and cropped afterwards, which suppresses wrap-around; with
/// Padding::none the propagation is periodic and exactly invertible on the
/// propagating band.
ComplexField propagate(const ComplexField& field, double distance,
                       Padding padding = Padding::twofold);

/// Unnormalized DFT of an SLM field.
Spectrum base_spectrum(const ComplexField& slm_field);

/// Sum of the base spectrum shifted by (j/p, k/p) for j, k in the central
/// orders x orders set, realised by tiling the periodic DFT spectrum onto
/// the supersampled grid. `orders` must be odd.
Spectrum high_order_spectrum(const ComplexField& slm_field, int orders);
Spectrum high_order_spectrum(const PhasePattern& phase, int orders);

/// Pixel-aperture envelope sinc(pi fx p) sinc(pi fy p), fill factor 1.
std::vector<double> sinc_envelope(const FrequencyGrid& grid, double pitch);

/// Binary disk of the pupil mapped to frequency through x = lambda f fx.
/// Logs a warning when the disk extends past the grid.
std::vector<std::uint8_t> pupil_mask(const PupilSpec& pupil, double wavelength,
                                     double eyepiece_focal_length, const FrequencyGrid& grid);

/// Field at `distance` behind an SLM showing `phase`, seen through `aperture`
/// (std::nullopt = no iris). Returned on the supersampled grid with pitch
/// p / orders. Normalised so that a flat unit-amplitude SLM with one order
/// and no envelope reconstructs to exactly exp(i phi).
ComplexField reconstruct_plane(const ComplexField& slm_field, const Aperture& aperture,
                               double distance, const OpticsSettings& settings);
ComplexField reconstruct_plane(const PhasePattern& phase, const Aperture& aperture,
                               double distance, const OpticsSettings& settings);

/// exp(i phase) as a field with the pattern's pitch.
ComplexField phase_to_field(const PhasePattern& phase, double wavelength);

} // namespace ergoholo
