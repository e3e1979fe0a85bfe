#include "ergoholo/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "ergoholo/errors.hpp"

namespace ergoholo {

PsnrValue psnr(const Image& image, const Image& target, double peak) {
    if (image.width != target.width || image.height != target.height)
        throw InputError("psnr: image is " + std::to_string(image.width) + "x" +
                         std::to_string(image.height) + ", target is " + std::to_string(target.width) +
                         "x" + std::to_string(target.height));
    if (!(peak > 0.0)) throw InputError("psnr: peak must be positive");
    if (image.size() == 0) throw InputError("psnr: empty images");
    double sse = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double d = image.data[i] - target.data[i];
        sse += d * d;
    }
    if (sse == 0.0) return {std::numeric_limits<double>::infinity(), true};
    const double mse = sse / static_cast<double>(image.size());
    return {10.0 * std::log10(peak * peak / mse), false};
}

Image upsample_nearest(const Image& image, int orders) {
    if (orders < 1 || orders % 2 == 0) throw InputError("upsample_nearest: orders must be odd");
    Image out{image.width * orders, image.height * orders};
    const int half = (orders - 1) / 2;
    for (int y = 0; y < out.height; ++y) {
        const int sy = ((y + half) / orders) % image.height;
        for (int x = 0; x < out.width; ++x) out.at(x, y) = image.at(((x + half) / orders) % image.width, sy);
    }
    return out;
}

FocalStack simulate_reconstruction(const HologramBatch& batch, const Aperture& pupil,
                                   const std::vector<double>& plane_depths, const ScaleSet& scales,
                                   const OptimizerConfig& config) {
    batch.validate();
    if (plane_depths.empty()) throw InputError("simulate_reconstruction: no planes");
    const auto cfg = config.effective();
    const double ps = pupil_scales({pupil}, cfg).front();

    FocalStack out;
    out.plane_depths = plane_depths;
    out.planes.assign(plane_depths.size(), {});
    for (const auto& ch : batch.channels) {
        ReconstructionModel model{batch.width(), batch.height(), plane_depths,
                                  model_settings(cfg, ch.wavelength)};
        auto amps = model.amplitudes(ch.frames, ch.global_scale, scales.laser_profile, pupil, ps);
        out.width = model.grid_width();
        out.height = model.grid_height();
        out.pitch = model.grid().pitch;
        out.wavelengths.push_back(ch.wavelength);
        for (std::size_t k = 0; k < amps.size(); ++k) out.planes[k].push_back(std::move(amps[k]));
    }
    return out;
}

std::vector<double> stack_psnr(const FocalStack& amplitudes, const FocalStack& intensity_targets,
                               int orders) {
    if (amplitudes.plane_count() != intensity_targets.plane_count())
        throw InputError("stack_psnr: plane counts differ");
    std::vector<double> out;
    for (std::size_t k = 0; k < amplitudes.plane_count(); ++k) {
        double acc = 0.0;
        for (std::size_t c = 0; c < amplitudes.channel_count(); ++c) {
            const auto tc = match_channel(intensity_targets, amplitudes.wavelengths[c]);
            Image target = intensity_targets.planes[k][tc];
            for (double& v : target.data) v = std::sqrt(std::max(v, 0.0));
            target = upsample_nearest(target, orders);
            const double peak = target.max() > 0.0 ? target.max() : 1.0;
            Image a = amplitudes.planes[k][c];
            for (double& v : a.data) v /= peak;
            for (double& v : target.data) v /= peak;
            acc += psnr(a, target, 1.0).db;
        }
        out.push_back(acc / static_cast<double>(amplitudes.channel_count()));
    }
    return out;
}

ComplexField dft_oracle(const ComplexField& field, double distance, Padding padding) {
    field.validate();
    if (field.width > 16 || field.height > 16)
        throw InputError("dft_oracle: grids beyond 16x16 are refused");
    const int pad = padding == Padding::twofold ? 2 : 1;
    const int w = field.width * pad;
    const int h = field.height * pad;
    const int ox = (w - field.width) / 2;
    const int oy = (h - field.height) / 2;
    const double two_pi = 2.0 * std::numbers::pi;
    const double lambda = field.wavelength;

    ComplexField out{field.width, field.height, field.pitch, field.wavelength};
    for (int fy_i = 0; fy_i < h; ++fy_i) {
        const int sy = fy_i < (h + 1) / 2 ? fy_i : fy_i - h;
        const double fy = sy / (h * field.pitch);
        for (int fx_i = 0; fx_i < w; ++fx_i) {
            const int sx = fx_i < (w + 1) / 2 ? fx_i : fx_i - w;
            const double fx = sx / (w * field.pitch);
            const double arg = 1.0 - lambda * lambda * (fx * fx + fy * fy);
            if (arg <= 0.0) continue;
            const cplx transfer = std::polar(1.0, two_pi / lambda * std::sqrt(arg) * distance);

            // Spectral coefficient of the (embedded) input at this frequency.
            cplx coeff{};
            for (int y = 0; y < field.height; ++y)
                for (int x = 0; x < field.width; ++x) {
                    const double ph = -two_pi * (static_cast<double>(sx) * (x + ox) / w +
                                                 static_cast<double>(sy) * (y + oy) / h);
                    coeff += field.at(x, y) * std::polar(1.0, ph);
                }
            coeff *= transfer / static_cast<double>(w * h);

            for (int y = 0; y < field.height; ++y)
                for (int x = 0; x < field.width; ++x) {
                    const double ph = two_pi * (static_cast<double>(sx) * (x + ox) / w +
                                                static_cast<double>(sy) * (y + oy) / h);
                    out.at(x, y) += coeff * std::polar(1.0, ph);
                }
        }
    }
    return out;
}

std::vector<SweepFrame> focal_sweep(const HologramBatch& batch, const Aperture& pupil, double z_start,
                                    double z_end, int steps, const ScaleSet& scales,
                                    const OptimizerConfig& config) {
    if (steps < 2) throw InputError("focal_sweep: steps must be at least 2");
    std::vector<double> depths(steps);
    for (int i = 0; i < steps; ++i) depths[i] = z_start + (z_end - z_start) * i / (steps - 1);

    // One model per frame keeps the plane list free of ordering constraints.
    std::vector<SweepFrame> frames;
    for (double z : depths) {
        auto stack = simulate_reconstruction(batch, pupil, {z}, scales, config);
        frames.push_back({z, std::move(stack.planes.front())});
    }
    return frames;
}

std::string sweep_frame_name(int index, int steps, const std::string& extension) {
    const int digits = std::max(4, static_cast<int>(std::to_string(std::max(steps - 1, 0)).size()));
    std::string n = std::to_string(index);
    return "frame_" + std::string(digits - std::min<int>(digits, static_cast<int>(n.size())), '0') + n +
           extension;
}

double gradient_energy(const Image& image) {
    double e = 0.0;
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x) {
            if (x + 1 < image.width) {
                const double d = image.at(x + 1, y) - image.at(x, y);
                e += d * d;
            }
            if (y + 1 < image.height) {
                const double d = image.at(x, y + 1) - image.at(x, y);
                e += d * d;
            }
        }
    return e;
}

std::vector<PupilSpec> pupil_lattice(const EyeBox& eyebox, int grid_n, double radius) {
    if (grid_n < 1) throw InputError("pupil lattice: grid_n must be at least 1");
    if (!(radius > 0.0)) throw InputError("pupil lattice: radius must be positive");
    auto axis = [&](double lo, double hi, int i) {
        if (grid_n == 1) return 0.5 * (lo + hi);
        return lo + radius + i * (hi - lo - 2.0 * radius) / (grid_n - 1);
    };
    std::vector<PupilSpec> out;
    for (int j = 0; j < grid_n; ++j)
        for (int i = 0; i < grid_n; ++i)
            out.push_back({axis(eyebox.x_min, eyebox.x_max, i), axis(eyebox.y_min, eyebox.y_max, j),
                           radius, PupilKind::fixed});
    return out;
}

MetricReport eyebox_sweep(const HologramBatch& batch, const FocalStack& targets, int grid_n,
                          double radius, const ScaleSet& scales, const OptimizerConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const auto cfg = config.effective();
    MetricReport report;
    report.plane_depths = targets.plane_depths;
    report.plane_psnr.assign(targets.plane_count(), 0.0);
    report.grid_n = grid_n;
    report.radius = radius;
    const auto lattice = pupil_lattice(cfg.eyebox, grid_n, radius);
    double sum = 0.0;
    for (std::size_t i = 0; i < lattice.size(); ++i) {
        PupilCell cell;
        cell.row = static_cast<int>(i) / grid_n;
        cell.col = static_cast<int>(i) % grid_n;
        cell.pupil = lattice[i];
        const auto recon = simulate_reconstruction(batch, lattice[i], targets.plane_depths, scales, cfg);
        cell.plane_psnr = stack_psnr(recon, targets, cfg.orders);
        for (double p : cell.plane_psnr) cell.psnr += p;
        cell.psnr /= static_cast<double>(cell.plane_psnr.size());
        sum += cell.psnr;
        for (std::size_t k = 0; k < cell.plane_psnr.size(); ++k) report.plane_psnr[k] += cell.plane_psnr[k];
        report.cells.push_back(std::move(cell));
    }
    report.min_psnr = report.cells.front().psnr;
    report.max_psnr = report.cells.front().psnr;
    for (const auto& c : report.cells) {
        report.min_psnr = std::min(report.min_psnr, c.psnr);
        report.max_psnr = std::max(report.max_psnr, c.psnr);
    }
    for (double& p : report.plane_psnr) p /= static_cast<double>(report.cells.size());
    report.mean_psnr = sum / static_cast<double>(report.cells.size());
    report.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
}

} // namespace ergoholo

namespace ergoholo {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

OracleResult propagate_oracle_suite(int fields, std::uint64_t seed, double tolerance) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 gen{seed};
    std::uniform_real_distribution<double> u{-1.0, 1.0};
    std::uniform_real_distribution<double> dist{-5e-3, 5e-3};
    const double wavelengths[] = {632e-9, 520e-9, 450e-9};
    double worst = 0.0;
    for (int i = 0; i < fields; ++i) {
        ComplexField f{8, 8, 8e-6, wavelengths[i % 3]};
        for (auto& v : f.data) v = {u(gen), u(gen)};
        const double z = dist(gen);
        const Padding pad = i % 2 ? Padding::twofold : Padding::none;
        const auto a = propagate(f, z, pad);
        const auto b = dft_oracle(f, z, pad);
        for (std::size_t k = 0; k < a.data.size(); ++k) worst = std::max(worst, std::abs(a.data[k] - b.data[k]));
    }
    return {"propagate vs direct summation", worst, tolerance, worst < tolerance, seconds_since(start)};
}

OracleResult gradient_oracle_suite(int configs, std::uint64_t seed, double tolerance) {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 gen{seed};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    double worst = 0.0;
    for (int i = 0; i < configs; ++i) {
        OptimizerConfig cfg;
        cfg.orders = i % 2 ? 3 : 1;
        cfg.frames = 2;
        cfg.scale_mode = i == configs - 1 ? ScaleMode::phase : ScaleMode::amplitude;
        const int n = 16;
        const double wl = 520e-9;

        FocalStack targets;
        targets.width = targets.height = n;
        targets.pitch = cfg.pitch;
        targets.plane_depths = {1e-3 + 1e-3 * u(gen), 3e-3 + 1e-3 * u(gen)};
        targets.wavelengths = {wl};
        for (int k = 0; k < 2; ++k) {
            Image img{n, n};
            for (double& v : img.data) v = u(gen);
            targets.planes.push_back({img});
        }
        HologramBatch batch;
        batch.channels.push_back({wl, {}, 0.5 + u(gen)});
        for (int t = 0; t < cfg.frames; ++t) {
            PhasePattern p{n, n, cfg.pitch};
            for (double& v : p.phase) v = 2.0 * std::numbers::pi * u(gen);
            batch.channels[0].frames.push_back(std::move(p));
        }
        ScaleSet scales;
        scales.laser_profile = Image{n, n};
        for (double& v : scales.laser_profile.data) v = 0.5 + u(gen);
        // Pupils kept inside the smaller (orders = 1) eye-side grid.
        const double half = wl * cfg.eyepiece_focal_length / (2.0 * cfg.pitch) * cfg.orders;
        const std::vector<Aperture> pupils{
            PupilSpec{0.3 * half * (u(gen) - 0.5), 0.3 * half * (u(gen) - 0.5), 0.4 * half, PupilKind::fixed},
            PupilSpec{0.3 * half * (u(gen) - 0.5), 0.3 * half * (u(gen) - 0.5), 0.6 * half, PupilKind::random}};

        const auto g = gradient(batch, pupils, targets, scales, cfg);
        auto loss_at = [&](const HologramBatch& b) { return forward_loss(b, pupils, targets, scales, cfg).loss; };
        auto rel = [](double a, double f) {
            const double d = std::max(std::abs(a), std::abs(f));
            return d == 0.0 ? 0.0 : std::abs(a - f) / d;
        };

        const double h = 1e-6;
        std::uniform_int_distribution<std::size_t> pick{0, static_cast<std::size_t>(n * n - 1)};
        for (int t = 0; t < cfg.frames; ++t)
            for (int s = 0; s < 6; ++s) {
                const std::size_t px = pick(gen);
                auto plus = batch, minus = batch;
                plus.channels[0].frames[t].phase[px] += h;
                minus.channels[0].frames[t].phase[px] -= h;
                const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
                worst = std::max(worst, rel(g.phase[0][t][px], fd));
            }
        auto plus = batch, minus = batch;
        plus.channels[0].global_scale += h;
        minus.channels[0].global_scale -= h;
        const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
        worst = std::max(worst, rel(g.global_scale[0], fd));
    }
    return {"analytic gradient vs central differences", worst, tolerance, worst < tolerance,
            seconds_since(start)};
}

} // namespace ergoholo
