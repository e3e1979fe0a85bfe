#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ergoholo/types.hpp"

namespace ergoholo {

/// One layer of a layered depth image. Colors are linear and non-negative,
/// depths are meters from the hologram plane.
struct LdiLayer {
    std::vector<std::array<double, 3>> color;
    std::vector<double> depth;
    std::vector<std::uint8_t> valid;
};

/// Multi-layer RGB-D scene. For every pixel, the depths of its valid samples
/// increase strictly from layers[0] (front) to layers.back().
struct LayeredDepthImage {
    int width = 0;
    int height = 0;
    double pitch = 8e-6;
    double volume_thickness = 4e-3;
    std::vector<LdiLayer> layers;

    LayeredDepthImage() = default;
    LayeredDepthImage(int w, int h, double pitch_m, double thickness_m)
        : width{w}, height{h}, pitch{pitch_m}, volume_thickness{thickness_m} {}

    /// Appends an all-invalid layer and returns it.
    LdiLayer& add_layer();
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    bool is_valid(int layer, int x, int y) const { return layers[layer].valid[index(x, y)] != 0; }
    void set(int layer, int x, int y, std::array<double, 3> rgb, double depth_m);

    /// Throws InputError on NaN samples, non-increasing per-pixel depths,
    /// negative colors or an empty scene.
    void validate() const;
};

/// Stack of intensity images, planes[k][c] for plane k and channel c.
struct FocalStack {
    int width = 0;
    int height = 0;
    double pitch = 8e-6;
    std::vector<double> plane_depths;
    std::vector<double> wavelengths;
    std::vector<std::vector<Image>> planes;

    std::size_t plane_count() const { return plane_depths.size(); }
    std::size_t channel_count() const { return wavelengths.size(); }

    void validate() const;
    FocalStack select_planes(const std::vector<int>& indices) const;
    FocalStack select_channel(std::size_t channel) const;
};

/// Space-domain mask applied to the incoherent kernel.
struct MaskSpec {
    enum class Kind { none, circular };
    Kind kind = Kind::circular;
    /// Half-angle of the blur cone in radians; 0 selects the diffraction
    /// limit asin(lambda / 2p).
    double max_angle = 0.0;

    double resolve_angle(double wavelength, double pitch) const;
};

/// Square sampling grid for kernels; the kernel origin sits at (size/2, size/2).
struct KernelGrid {
    int size = 32;
    double pitch = 8e-6;
};

struct CircularMask {
    int size = 0;
    double radius_samples = 0.0;
    bool covers_grid = false;
    std::vector<std::uint8_t> values;
};

/// Disk of radius |dz| tan(max_angle), rasterised with the origin sample
/// always included. Returns all ones when the disk reaches past the grid.
CircularMask circular_mask(double delta_depth, double max_angle, const KernelGrid& grid);

struct IncoherentKernel {
    double delta_depth = 0.0;
    double wavelength = 0.0;
    int size = 0;
    double pitch = 0.0;
    int support_radius = 0;
    std::vector<double> values;

    /// Weight at offset (dx, dy) from the source sample.
    double at(int dx, int dy) const {
        return values[static_cast<std::size_t>(dy + size / 2) * size + dx + size / 2];
    }
};

/// Unit-sum intensity PSF |F^-1{H(z - plane)}|^2 times the mask.
/// Throws InputError if a circular mask does not fit the grid.
IncoherentKernel incoherent_kernel(double point_depth, double plane_depth, double wavelength,
                                   const MaskSpec& mask, const KernelGrid& grid);

/// Quarter of the inter-plane spacing of `plane_count` planes over the volume.
double default_depth_tolerance(double volume_thickness, int plane_count);

/// True when the segment from the source sample (pixel center, at its depth)
/// to the target sample (pixel center, at plane_depth) meets no opaque LDI
/// facet whose depth lies strictly between the two end depths. Facets within
/// `depth_tolerance` of the source depth are ignored so that a surface does
/// not shadow itself. Facets are unit pixel squares at their stored depth.
bool trace_visibility(const LayeredDepthImage& ldi, int src_x, int src_y, int src_layer,
                      int tgt_x, int tgt_y, double plane_depth, double depth_tolerance);

struct RenderSettings {
    MaskSpec mask;
    /// Kernel grid edge in samples; 0 picks one that fits the widest blur.
    int kernel_grid = 0;
    /// Occlusion tolerance in meters; unset uses default_depth_tolerance
    /// with `tolerance_plane_count` planes.
    std::optional<double> depth_tolerance;
    int tolerance_plane_count = 32;
    /// LDI color index (0 red, 1 green, 2 blue) per wavelength; empty means
    /// wavelength c uses color c.
    std::vector<int> color_channels;
    /// Worker threads; 0 reads ERGOHOLO_THREADS or the hardware count.
    int threads = 0;
};

/// `count` evenly spaced depths over [0, thickness].
std::vector<double> even_planes(double thickness, int count);

/// Smallest even kernel grid holding every blur disk of the scene.
int auto_kernel_grid(const LayeredDepthImage& ldi, const std::vector<double>& plane_depths,
                     const std::vector<double>& wavelengths, const MaskSpec& mask);

/// Incoherent focal stack: every valid LDI point deposits its color times its
/// defocus kernel onto each plane, masked by per-ray visibility.
FocalStack render_focal_stack(const LayeredDepthImage& ldi, const std::vector<double>& plane_depths,
                              const std::vector<double>& wavelengths,
                              const RenderSettings& settings = {});

} // namespace ergoholo
