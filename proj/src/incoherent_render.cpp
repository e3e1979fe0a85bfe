#include "ergoholo/incoherent_render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <string>

#include "ergoholo/errors.hpp"
#include "ergoholo/fft.hpp"
#include "ergoholo/parallel.hpp"
#include "ergoholo/wave_optics.hpp"

namespace ergoholo {

LdiLayer& LayeredDepthImage::add_layer() {
    const auto n = static_cast<std::size_t>(width) * height;
    LdiLayer layer;
    layer.color.assign(n, {0.0, 0.0, 0.0});
    layer.depth.assign(n, 0.0);
    layer.valid.assign(n, 0);
    layers.push_back(std::move(layer));
    return layers.back();
}

void LayeredDepthImage::set(int layer, int x, int y, std::array<double, 3> rgb, double depth_m) {
    auto& l = layers.at(layer);
    const auto i = index(x, y);
    l.color[i] = rgb;
    l.depth[i] = depth_m;
    l.valid[i] = 1;
}

void LayeredDepthImage::validate() const {
    if (width <= 0 || height <= 0) throw InputError("LDI has non-positive dimensions");
    if (!(pitch > 0.0)) throw InputError("LDI pitch must be positive");
    if (!(volume_thickness > 0.0)) throw InputError("LDI volume thickness must be positive");
    if (layers.empty()) throw InputError("LDI has no layers");
    const auto n = static_cast<std::size_t>(width) * height;
    bool any_valid = false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.color.size() != n || layer.depth.size() != n || layer.valid.size() != n)
            throw InputError("LDI layer " + std::to_string(l) + " has the wrong sample count");
        for (std::size_t i = 0; i < n; ++i) {
            if (!layer.valid[i]) continue;
            any_valid = true;
            if (!std::isfinite(layer.depth[i]))
                throw InputError("LDI layer " + std::to_string(l) + " has a non-finite depth at sample " +
                                 std::to_string(i));
            for (double c : layer.color[i])
                if (!std::isfinite(c) || c < 0.0)
                    throw InputError("LDI layer " + std::to_string(l) +
                                     " has a negative or non-finite color at sample " +
                                     std::to_string(i));
        }
    }
    if (!any_valid) throw InputError("LDI has no valid samples");
    for (std::size_t i = 0; i < n; ++i) {
        double prev = -std::numeric_limits<double>::infinity();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (!layers[l].valid[i]) continue;
            if (!(layers[l].depth[i] > prev))
                throw InputError("LDI depths are not strictly increasing front to back at sample " +
                                 std::to_string(i));
            prev = layers[l].depth[i];
        }
    }
}

void FocalStack::validate() const {
    if (plane_depths.empty()) throw InputError("focal stack has no planes");
    if (planes.size() != plane_depths.size())
        throw InputError("focal stack plane count does not match its depth list");
    for (std::size_t k = 1; k < plane_depths.size(); ++k)
        if (!(plane_depths[k] > plane_depths[k - 1]))
            throw InputError("focal stack plane depths must be strictly increasing");
    for (const auto& plane : planes) {
        if (plane.size() != wavelengths.size())
            throw InputError("focal stack channel count does not match its wavelengths");
        for (const auto& img : plane) {
            if (img.width != width || img.height != height)
                throw InputError("focal stack image has the wrong shape");
            for (double v : img.data)
                if (!std::isfinite(v) || v < 0.0)
                    throw InputError("focal stack contains a negative or non-finite intensity");
        }
    }
}

FocalStack FocalStack::select_planes(const std::vector<int>& indices) const {
    FocalStack out{width, height, pitch, {}, wavelengths, {}};
    for (int k : indices) {
        if (k < 0 || static_cast<std::size_t>(k) >= plane_count())
            throw InputError("plane index " + std::to_string(k) + " out of range (stack has " +
                             std::to_string(plane_count()) + " planes)");
        out.plane_depths.push_back(plane_depths[k]);
        out.planes.push_back(planes[k]);
    }
    return out;
}

FocalStack FocalStack::select_channel(std::size_t channel) const {
    if (channel >= channel_count()) throw InputError("channel index out of range");
    FocalStack out{width, height, pitch, plane_depths, {wavelengths[channel]}, {}};
    for (const auto& plane : planes) out.planes.push_back({plane[channel]});
    return out;
}

double MaskSpec::resolve_angle(double wavelength, double pitch) const {
    if (max_angle > 0.0) return max_angle;
    return std::asin(std::min(1.0, wavelength / (2.0 * pitch)));
}

CircularMask circular_mask(double delta_depth, double max_angle, const KernelGrid& grid) {
    if (!(max_angle > 0.0) || !(max_angle < std::numbers::pi / 2))
        throw InputError("circular_mask: max_angle must lie in (0, pi/2)");
    CircularMask m;
    m.size = grid.size;
    m.radius_samples = std::abs(delta_depth) * std::tan(max_angle) / grid.pitch;
    const int half = grid.size / 2;
    m.values.assign(static_cast<std::size_t>(grid.size) * grid.size, 0);
    if (m.radius_samples >= half) {
        m.covers_grid = true;
        std::fill(m.values.begin(), m.values.end(), 1);
        return m;
    }
    const double r2 = m.radius_samples * m.radius_samples;
    for (int dy = -half; dy < grid.size - half; ++dy)
        for (int dx = -half; dx < grid.size - half; ++dx)
            if (dx * dx + dy * dy <= r2)
                m.values[static_cast<std::size_t>(dy + half) * grid.size + dx + half] = 1;
    return m;
}

IncoherentKernel incoherent_kernel(double point_depth, double plane_depth, double wavelength,
                                   const MaskSpec& mask, const KernelGrid& grid) {
    if (grid.size < 2 || grid.size % 2 != 0)
        throw InputError("incoherent_kernel: kernel grid must be even and at least 2");
    if (!(grid.pitch > 0.0)) throw InputError("incoherent_kernel: pitch must be positive");
    const double dz = point_depth - plane_depth;
    const int n = grid.size;
    const int half = n / 2;

    std::vector<std::uint8_t> mask_values(static_cast<std::size_t>(n) * n, 1);
    int support = half;
    if (mask.kind == MaskSpec::Kind::circular) {
        const auto cm = circular_mask(dz, mask.resolve_angle(wavelength, grid.pitch), grid);
        if (cm.covers_grid)
            throw InputError("incoherent_kernel: blur disk of radius " +
                             std::to_string(cm.radius_samples) + " samples exceeds kernel grid " +
                             std::to_string(n));
        mask_values = cm.values;
        support = static_cast<int>(std::floor(cm.radius_samples));
    }

    // Coherent PSF of the band-limited kernel: inverse transform of H.
    auto psf = coherent_kernel(FrequencyGrid::of(n, n, grid.pitch), wavelength, dz).values;
    Fft2d::shared(n, n)->inverse(psf);

    IncoherentKernel k{dz, wavelength, n, grid.pitch, support,
                       std::vector<double>(static_cast<std::size_t>(n) * n, 0.0)};
    double total = 0.0;
    for (int dy = -half; dy < n - half; ++dy) {
        const int sy = dy < 0 ? dy + n : dy;
        for (int dx = -half; dx < n - half; ++dx) {
            const auto c = static_cast<std::size_t>(dy + half) * n + dx + half;
            if (!mask_values[c]) continue;
            const int sx = dx < 0 ? dx + n : dx;
            const double v = std::norm(psf[static_cast<std::size_t>(sy) * n + sx]);
            k.values[c] = v;
            total += v;
        }
    }
    if (!(total > 0.0)) throw NumericalError("incoherent_kernel: kernel has zero energy");
    for (double& v : k.values) v /= total;
    return k;
}

double default_depth_tolerance(double volume_thickness, int plane_count) {
    return volume_thickness / (4.0 * std::max(plane_count, 1));
}

namespace {

bool strictly_between(double z, double a, double b) { return (z - a) * (z - b) < 0.0; }

// True if some facet of column (cx, cy), other than the source sample, lies
// strictly between the end depths, away from the source by more than the
// tolerance, and inside the ray depth span [lo, hi] over that column.
bool column_blocks(const LayeredDepthImage& ldi, int cx, int cy, int src_x, int src_y,
                   int src_layer, double z_src, double z_plane, double tol, double lo, double hi) {
    const auto idx = ldi.index(cx, cy);
    for (std::size_t l = 0; l < ldi.layers.size(); ++l) {
        const auto& layer = ldi.layers[l];
        if (!layer.valid[idx]) continue;
        if (cx == src_x && cy == src_y && static_cast<int>(l) == src_layer) continue;
        const double z = layer.depth[idx];
        if (!strictly_between(z, z_src, z_plane)) continue;
        if (std::abs(z - z_src) <= tol) continue;
        if (z >= lo && z <= hi) return true;
    }
    return false;
}

} // namespace

bool trace_visibility(const LayeredDepthImage& ldi, int src_x, int src_y, int src_layer,
                      int tgt_x, int tgt_y, double plane_depth, double depth_tolerance) {
    const auto src_idx = ldi.index(src_x, src_y);
    const double z0 = ldi.layers.at(src_layer).depth[src_idx];
    const double dz = plane_depth - z0;
    auto depth_at = [&](double t) { return z0 + t * dz; };

    const double dir_x = tgt_x - src_x;
    const double dir_y = tgt_y - src_y;
    const int step_x = dir_x > 0 ? 1 : (dir_x < 0 ? -1 : 0);
    const int step_y = dir_y > 0 ? 1 : (dir_y < 0 ? -1 : 0);
    constexpr double inf = std::numeric_limits<double>::infinity();
    // Rays start at pixel centers, half a pixel from either column border.
    const double delta_x = step_x != 0 ? 1.0 / std::abs(dir_x) : inf;
    const double delta_y = step_y != 0 ? 1.0 / std::abs(dir_y) : inf;
    double next_x = step_x != 0 ? 0.5 * delta_x : inf;
    double next_y = step_y != 0 ? 0.5 * delta_y : inf;

    int cx = src_x;
    int cy = src_y;
    double t = 0.0;
    for (;;) {
        const double t_exit = std::min({next_x, next_y, 1.0});
        const double za = depth_at(t);
        const double zb = depth_at(t_exit);
        if (cx >= 0 && cy >= 0 && cx < ldi.width && cy < ldi.height &&
            column_blocks(ldi, cx, cy, src_x, src_y, src_layer, z0, plane_depth, depth_tolerance,
                          std::min(za, zb), std::max(za, zb)))
            return false;
        if (t_exit >= 1.0) break;
        t = t_exit;
        if (next_x < next_y) {
            cx += step_x;
            next_x += delta_x;
        } else if (next_y < next_x) {
            cy += step_y;
            next_y += delta_y;
        } else {
            // Exact corner crossing: the side columns are touched at a point only.
            cx += step_x;
            cy += step_y;
            next_x += delta_x;
            next_y += delta_y;
        }
    }
    return true;
}

std::vector<double> even_planes(double thickness, int count) {
    if (count < 1) throw InputError("plane count must be at least 1");
    if (count == 1) return {0.0};
    std::vector<double> out(count);
    for (int k = 0; k < count; ++k) out[k] = thickness * k / (count - 1);
    return out;
}

int auto_kernel_grid(const LayeredDepthImage& ldi, const std::vector<double>& plane_depths,
                     const std::vector<double>& wavelengths, const MaskSpec& mask) {
    double z_min = std::numeric_limits<double>::infinity();
    double z_max = -z_min;
    for (const auto& layer : ldi.layers)
        for (std::size_t i = 0; i < layer.depth.size(); ++i)
            if (layer.valid[i]) {
                z_min = std::min(z_min, layer.depth[i]);
                z_max = std::max(z_max, layer.depth[i]);
            }
    double max_dz = 0.0;
    for (double d : plane_depths) max_dz = std::max({max_dz, std::abs(z_min - d), std::abs(z_max - d)});
    double max_tan = 0.0;
    for (double wl : wavelengths) {
        // Without a mask the blur extent still follows the diffraction cone.
        MaskSpec cone = mask;
        if (mask.kind == MaskSpec::Kind::none) cone.max_angle = 0.0;
        max_tan = std::max(max_tan, std::tan(cone.resolve_angle(wl, ldi.pitch)));
    }
    const int radius = static_cast<int>(std::ceil(max_dz * max_tan / ldi.pitch));
    int size = 2 * radius + 8;
    size += size % 2;
    return size;
}

namespace {

struct SparseKernel {
    struct Tap {
        int dx;
        int dy;
        double w;
    };
    int radius = 0;
    std::vector<Tap> taps;
};

SparseKernel sparsify(const IncoherentKernel& k) {
    SparseKernel s;
    s.radius = 0;
    const int half = k.size / 2;
    for (int dy = -half; dy < k.size - half; ++dy)
        for (int dx = -half; dx < k.size - half; ++dx) {
            const double w = k.at(dx, dy);
            if (w == 0.0) continue;
            s.taps.push_back({dx, dy, w});
            s.radius = std::max({s.radius, std::abs(dx), std::abs(dy)});
        }
    return s;
}

// Any facet near the source that could block one of its rays to this plane.
bool may_be_occluded(const LayeredDepthImage& ldi, int sx, int sy, int src_layer, double z_src,
                     double z_plane, double tol, int radius) {
    const int x0 = std::max(0, sx - radius - 1);
    const int x1 = std::min(ldi.width - 1, sx + radius + 1);
    const int y0 = std::max(0, sy - radius - 1);
    const int y1 = std::min(ldi.height - 1, sy + radius + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const auto idx = ldi.index(x, y);
            for (std::size_t l = 0; l < ldi.layers.size(); ++l) {
                if (!ldi.layers[l].valid[idx]) continue;
                if (x == sx && y == sy && static_cast<int>(l) == src_layer) continue;
                const double z = ldi.layers[l].depth[idx];
                if (strictly_between(z, z_src, z_plane) && std::abs(z - z_src) > tol) return true;
            }
        }
    return false;
}

Image render_plane(const LayeredDepthImage& ldi, int channel, double plane_depth, double wavelength,
                   const MaskSpec& mask, const KernelGrid& grid, double tol) {
    Image out{ldi.width, ldi.height, 0.0};
    std::map<double, std::shared_ptr<const SparseKernel>> kernels;
    for (std::size_t l = 0; l < ldi.layers.size(); ++l) {
        const auto& layer = ldi.layers[l];
        for (int sy = 0; sy < ldi.height; ++sy)
            for (int sx = 0; sx < ldi.width; ++sx) {
                const auto idx = ldi.index(sx, sy);
                if (!layer.valid[idx]) continue;
                const double intensity = layer.color[idx][channel];
                if (intensity == 0.0) continue;
                const double z = layer.depth[idx];

                auto& slot = kernels[z];
                if (!slot)
                    slot = std::make_shared<const SparseKernel>(
                        sparsify(incoherent_kernel(z, plane_depth, wavelength, mask, grid)));
                const SparseKernel& k = *slot;

                const bool trace = may_be_occluded(ldi, sx, sy, static_cast<int>(l), z,
                                                   plane_depth, tol, k.radius);
                for (const auto& tap : k.taps) {
                    const int tx = sx + tap.dx;
                    const int ty = sy + tap.dy;
                    if (tx < 0 || ty < 0 || tx >= ldi.width || ty >= ldi.height) continue;
                    if (trace && !trace_visibility(ldi, sx, sy, static_cast<int>(l), tx, ty,
                                                   plane_depth, tol))
                        continue;
                    out.at(tx, ty) += intensity * tap.w;
                }
            }
    }
    return out;
}

} // namespace

FocalStack render_focal_stack(const LayeredDepthImage& ldi, const std::vector<double>& plane_depths,
                              const std::vector<double>& wavelengths,
                              const RenderSettings& settings) {
    ldi.validate();
    if (plane_depths.empty()) throw InputError("render_focal_stack: no planes requested");
    for (double d : plane_depths)
        if (!std::isfinite(d)) throw InputError("render_focal_stack: non-finite plane depth");
    if (wavelengths.empty() || wavelengths.size() > 3)
        throw InputError("render_focal_stack: expected 1 to 3 wavelengths");
    for (double wl : wavelengths)
        if (!(wl > 0.0)) throw InputError("render_focal_stack: wavelengths must be positive");

    const KernelGrid grid{settings.kernel_grid > 0
                              ? settings.kernel_grid
                              : auto_kernel_grid(ldi, plane_depths, wavelengths, settings.mask),
                          ldi.pitch};
    const double tol = settings.depth_tolerance.value_or(
        default_depth_tolerance(ldi.volume_thickness, settings.tolerance_plane_count));

    FocalStack stack{ldi.width, ldi.height, ldi.pitch, plane_depths, wavelengths, {}};
    stack.planes.assign(plane_depths.size(), std::vector<Image>(wavelengths.size()));

    std::vector<int> color_of(wavelengths.size());
    for (std::size_t c = 0; c < wavelengths.size(); ++c) color_of[c] = static_cast<int>(c);
    if (!settings.color_channels.empty()) {
        if (settings.color_channels.size() != wavelengths.size())
            throw InputError("render_focal_stack: color channel map does not match wavelengths");
        for (int ci : settings.color_channels)
            if (ci < 0 || ci > 2) throw InputError("render_focal_stack: color channel out of range");
        color_of = settings.color_channels;
    }

    const int planes = static_cast<int>(plane_depths.size());
    const int channels = static_cast<int>(wavelengths.size());
    parallel_for(planes * channels, resolve_threads(settings.threads), [&](int task, int) {
        const int k = task / channels;
        const int c = task % channels;
        stack.planes[k][c] = render_plane(ldi, color_of[c], plane_depths[k], wavelengths[c], settings.mask, grid, tol);
    });
    return stack;
}

} // namespace ergoholo
