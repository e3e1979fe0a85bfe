#include "ergoholo/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "ergoholo/adam.hpp"
#include "ergoholo/image_io.hpp"
#include "ergoholo/kernel_cache.hpp"
#include "ergoholo/parallel.hpp"

namespace ergoholo {

int HologramBatch::frame_count() const {
    return channels.empty() ? 0 : static_cast<int>(channels.front().frames.size());
}

int HologramBatch::width() const {
    return frame_count() == 0 ? 0 : channels.front().frames.front().width;
}

int HologramBatch::height() const {
    return frame_count() == 0 ? 0 : channels.front().frames.front().height;
}

double HologramBatch::pitch() const {
    return frame_count() == 0 ? 0.0 : channels.front().frames.front().pitch;
}

void HologramBatch::validate() const {
    if (channels.empty()) throw InputError("hologram batch has no channels");
    const int t = frame_count();
    if (t < 1) throw InputError("hologram batch has no frames");
    for (const auto& ch : channels) {
        if (static_cast<int>(ch.frames.size()) != t)
            throw InputError("hologram batch channels disagree on the frame count");
        if (!(ch.global_scale > 0.0)) throw InputError("hologram global scale must be positive");
        if (!(ch.wavelength > 0.0)) throw InputError("hologram wavelength must be positive");
        for (const auto& f : ch.frames) {
            if (f.width != width() || f.height != height() || f.size() != static_cast<std::size_t>(f.width) * f.height)
                throw InputError("hologram frames disagree on their shape");
            for (double p : f.phase)
                if (!std::isfinite(p)) throw InputError("hologram frame contains a non-finite phase");
        }
    }
}

void OptimizerConfig::validate() const {
    if (frames < 1) throw InputError("frames must be at least 1");
    if (orders < 1 || orders % 2 == 0) throw InputError("orders must be a positive odd integer");
    if (pupils_fixed < 0 || pupils_random < 0) throw InputError("pupil counts must be non-negative");
    if (pupils_total != pupils_fixed + pupils_random)
        throw InputError("pupil counts must satisfy total = fixed + random (" +
                         std::to_string(pupils_total) + " != " + std::to_string(pupils_fixed) +
                         " + " + std::to_string(pupils_random) + ")");
    if (!disable_pupils && pupils_total < 1) throw InputError("at least one pupil is required");
    const int root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pupils_fixed))));
    if (root * root != pupils_fixed)
        throw InputError("fixed pupil count must be a perfect square, got " + std::to_string(pupils_fixed));
    if (!(base_radius > 0.0)) throw InputError("base pupil radius must be positive");
    if (!(eyebox.x_max > eyebox.x_min) || !(eyebox.y_max > eyebox.y_min))
        throw InputError("eye box is degenerate");
    if (iterations < 0) throw InputError("iterations must be non-negative");
    if (!(step_size > 0.0)) throw InputError("step size must be positive");
    if (!(pitch > 0.0)) throw InputError("pitch must be positive");
    if (!(eyepiece_focal_length > 0.0)) throw InputError("eyepiece focal length must be positive");
    if (!(intensity_floor > 0.0)) throw InputError("intensity floor must be positive");
}

OptimizerConfig OptimizerConfig::effective() const {
    OptimizerConfig c = *this;
    if (c.disable_time_multiplexing) c.frames = 1;
    if (c.disable_high_orders) c.orders = 1;
    if (c.center_pupil_only) {
        c.pupils_total = 1;
        c.pupils_fixed = 1;
        c.pupils_random = 0;
    }
    return c;
}

std::vector<PupilSpec> fixed_pupils(const OptimizerConfig& config) {
    const auto c = config.effective();
    const double r = c.base_radius;
    const auto& box = c.eyebox;
    if (2.0 * r > box.x_max - box.x_min || 2.0 * r > box.y_max - box.y_min)
        throw InputError("eye box cannot contain a pupil of radius " + std::to_string(r));
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.pupils_fixed))));
    auto axis = [&](double lo, double hi, int i) {
        if (n == 1) return 0.5 * (lo + hi);
        return lo + r + i * (hi - lo - 2.0 * r) / (n - 1);
    };
    std::vector<PupilSpec> out;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            out.push_back({axis(box.x_min, box.x_max, i), axis(box.y_min, box.y_max, j), r,
                           PupilKind::fixed});
    return out;
}

std::vector<Aperture> sample_pupils(const OptimizerConfig& config, int iteration) {
    const auto c = config.effective();
    if (c.disable_pupils) return {std::nullopt};
    std::vector<Aperture> out;
    for (const auto& p : fixed_pupils(c)) out.emplace_back(p);
    if (c.pupils_random == 0) return out;

    const auto& box = c.eyebox;
    const double r = c.base_radius;
    const double largest = 0.5 * std::min(box.x_max - box.x_min, box.y_max - box.y_min);
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                      static_cast<std::uint32_t>(iteration), 0x70757069u};
    std::mt19937_64 gen{seq};
    std::uniform_real_distribution<double> radius_dist{0.5 * r, 2.0 * r};
    std::uniform_real_distribution<double> x_dist{box.x_min + r, box.x_max - r};
    std::uniform_real_distribution<double> y_dist{box.y_min + r, box.y_max - r};
    for (int i = 0; i < c.pupils_random; ++i) {
        const double rho = std::min(radius_dist(gen), largest);
        const double x = std::clamp(x_dist(gen), box.x_min + rho, box.x_max - rho);
        const double y = std::clamp(y_dist(gen), box.y_min + rho, box.y_max - rho);
        out.emplace_back(PupilSpec{x, y, rho, PupilKind::random});
    }
    return out;
}

double pupil_normalization(double radius, double base_radius) {
    if (!(radius > 0.0) || !(base_radius > 0.0))
        throw InputError("pupil_normalization: radii must be positive");
    return radius / base_radius;
}

std::vector<double> pupil_scales(const std::vector<Aperture>& pupils, const OptimizerConfig& config) {
    std::vector<double> out;
    for (const auto& p : pupils)
        out.push_back(p && config.pupil_normalization ? pupil_normalization(p->radius, config.base_radius)
                                                      : 1.0);
    return out;
}

ReconstructionModel::Settings model_settings(const OptimizerConfig& config, double wavelength) {
    ReconstructionModel::Settings s;
    s.orders = config.effective().orders;
    s.pitch = config.pitch;
    s.wavelength = wavelength;
    s.eyepiece_focal_length = config.eyepiece_focal_length;
    s.sinc_envelope = config.sinc_envelope;
    s.scale_mode = config.scale_mode;
    s.norm = config.loss_norm;
    s.intensity_floor = config.intensity_floor;
    s.threads = resolve_threads(config.threads);
    return s;
}

std::size_t match_channel(const FocalStack& targets, double wavelength) {
    for (std::size_t c = 0; c < targets.wavelengths.size(); ++c)
        if (std::abs(targets.wavelengths[c] - wavelength) <= 1e-12) return c;
    throw InputError("targets have no channel at wavelength " + std::to_string(wavelength));
}

std::vector<Image> amplitude_targets(const FocalStack& targets, std::size_t channel) {
    std::vector<Image> out;
    for (const auto& plane : targets.planes) {
        Image a = plane.at(channel);
        for (double& v : a.data) v = std::sqrt(std::max(v, 0.0));
        out.push_back(std::move(a));
    }
    return out;
}

namespace {

void check_targets(const HologramBatch& batch, const FocalStack& targets) {
    batch.validate();
    targets.validate();
    if (targets.width != batch.width() || targets.height != batch.height())
        throw InputError("target planes are " + std::to_string(targets.width) + "x" +
                         std::to_string(targets.height) + " but the holograms are " +
                         std::to_string(batch.width()) + "x" + std::to_string(batch.height()));
}

std::vector<double> scales_for(const ScaleSet& scales, const std::vector<Aperture>& pupils,
                               const OptimizerConfig& config) {
    if (scales.pupil_scales.empty()) return pupil_scales(pupils, config);
    if (scales.pupil_scales.size() != pupils.size())
        throw InputError("scale set has " + std::to_string(scales.pupil_scales.size()) +
                         " pupil scales for " + std::to_string(pupils.size()) + " pupils");
    for (double s : scales.pupil_scales)
        if (!(s > 0.0)) throw InputError("pupil scales must be positive");
    return scales.pupil_scales;
}

template <class Fn>
void for_each_channel(const HologramBatch& batch, const FocalStack& targets,
                      const OptimizerConfig& config, Fn&& fn) {
    for (std::size_t c = 0; c < batch.channels.size(); ++c) {
        const auto& ch = batch.channels[c];
        const auto tc = match_channel(targets, ch.wavelength);
        ReconstructionModel model{batch.width(), batch.height(), targets.plane_depths,
                                  model_settings(config, ch.wavelength)};
        fn(c, ch, model, amplitude_targets(targets, tc));
    }
}

} // namespace

LossReport forward_loss(const HologramBatch& batch, const std::vector<Aperture>& pupils,
                        const FocalStack& targets, const ScaleSet& scales,
                        const OptimizerConfig& config) {
    check_targets(batch, targets);
    const auto ps = scales_for(scales, pupils, config);
    LossReport report;
    for_each_channel(batch, targets, config, [&](std::size_t, const HologramChannel& ch,
                                                 const ReconstructionModel& model,
                                                 const std::vector<Image>& amps) {
        auto ev = model.evaluate(ch.frames, ch.global_scale, scales.laser_profile, pupils, ps, amps, false);
        report.loss += ev.loss;
        report.residuals.push_back(std::move(ev.pair_loss));
    });
    return report;
}

BatchGradient gradient(const HologramBatch& batch, const std::vector<Aperture>& pupils,
                       const FocalStack& targets, const ScaleSet& scales,
                       const OptimizerConfig& config) {
    check_targets(batch, targets);
    const auto ps = scales_for(scales, pupils, config);
    BatchGradient g;
    for_each_channel(batch, targets, config, [&](std::size_t, const HologramChannel& ch,
                                                 const ReconstructionModel& model,
                                                 const std::vector<Image>& amps) {
        auto ev = model.evaluate(ch.frames, ch.global_scale, scales.laser_profile, pupils, ps, amps, true);
        g.loss += ev.loss;
        g.phase.push_back(std::move(ev.phase_grad));
        g.global_scale.push_back(ev.scale_grad);
    });
    return g;
}

HologramBatch initial_batch(const OptimizerConfig& config, int width, int height,
                            const std::vector<double>& wavelengths) {
    const auto c = config.effective();
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                      0x696e6974u};
    std::mt19937_64 gen{seq};
    std::uniform_real_distribution<double> phase{0.0, 2.0 * std::numbers::pi};
    HologramBatch batch;
    for (double wl : wavelengths) {
        HologramChannel ch{wl, {}, 1.0};
        for (int t = 0; t < c.frames; ++t) {
            PhasePattern p{width, height, c.pitch};
            for (double& v : p.phase) v = phase(gen);
            ch.frames.push_back(std::move(p));
        }
        batch.channels.push_back(std::move(ch));
    }
    return batch;
}

OptimizeResult optimize(const OptimizerConfig& config, const FocalStack& targets,
                        const ScaleSet& scales, const std::optional<HologramBatch>& initial,
                        const ProgressCallback& progress) {
    const auto cfg = config.effective();
    cfg.validate();
    targets.validate();
    const FocalStack supervised =
        cfg.plane_indices.empty() ? targets : targets.select_planes(cfg.plane_indices);

    OptimizeResult result;
    if (initial) {
        result.batch = *initial;
        result.batch.validate();
        if (result.batch.frame_count() != cfg.frames)
            throw InputError("initial batch has " + std::to_string(result.batch.frame_count()) +
                             " frames, config asks for " + std::to_string(cfg.frames));
    } else {
        result.batch = initial_batch(cfg, targets.width, targets.height, targets.wavelengths);
    }
    check_targets(result.batch, supervised);

    KernelCache cache;
    std::vector<ReconstructionModel> models;
    std::vector<std::vector<Image>> amps;
    for (const auto& ch : result.batch.channels) {
        // Tuned plans are faster; their choice varies between processes,
        // which moves losses by a few ulps.
        auto settings = model_settings(cfg, ch.wavelength);
        settings.planning = Planning::measure;
        models.emplace_back(targets.width, targets.height, supervised.plane_depths, settings, &cache);
        amps.push_back(amplitude_targets(supervised, match_channel(supervised, ch.wavelength)));
    }
    const Image& laser = scales.laser_profile;

    if (!initial && cfg.scale_mode == ScaleMode::amplitude) {
        const auto pupils = sample_pupils(cfg, 0);
        const auto ps = scales_for(scales, pupils, cfg);
        for (std::size_t c = 0; c < models.size(); ++c) {
            auto& ch = result.batch.channels[c];
            double target_mean = 0.0;
            for (const auto& a : amps[c]) target_mean += a.sum() / a.size();
            target_mean /= amps[c].size();
            double recon_mean = 0.0;
            for (std::size_t q = 0; q < pupils.size(); ++q)
                for (const auto& a : models[c].amplitudes(ch.frames, 1.0, laser, pupils[q], ps[q]))
                    recon_mean += a.sum() / a.size();
            recon_mean /= static_cast<double>(pupils.size() * amps[c].size());
            if (recon_mean > 0.0 && target_mean > 0.0) ch.global_scale = target_mean / recon_mean;
        }
    }

    if (cfg.iterations == 0) return result;

    std::vector<std::vector<Adam>> phase_opt(models.size());
    std::vector<Adam> scale_opt;
    for (std::size_t c = 0; c < result.batch.channels.size(); ++c) {
        const auto& ch = result.batch.channels[c];
        for (const auto& f : ch.frames)
            phase_opt[c].emplace_back(f.size(), cfg.step_size, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
        scale_opt.emplace_back(1, cfg.step_size, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    }

    HologramBatch current = result.batch;
    double best = std::numeric_limits<double>::infinity();
    const auto start = std::chrono::steady_clock::now();
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto pupils = sample_pupils(cfg, it);
        const auto ps = scales_for(scales, pupils, cfg);
        double total = 0.0;
        std::vector<ReconstructionModel::Evaluation> evals;
        try {
            for (std::size_t c = 0; c < models.size(); ++c) {
                const auto& ch = current.channels[c];
                evals.push_back(models[c].evaluate(ch.frames, ch.global_scale, laser, pupils, ps, amps[c], true));
                total += evals.back().loss;
            }
        } catch (const NumericalError&) {
            total = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(total))
            throw OptimizationDiverged("loss became non-finite at iteration " + std::to_string(it),
                                       result);
        if (total < best) {
            best = total;
            result.batch = current;
            result.best_iteration = it;
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.history.push_back({it, total, best, ms});
        if (progress) progress(result.history.back());

        for (std::size_t c = 0; c < models.size(); ++c) {
            auto& ch = current.channels[c];
            for (std::size_t t = 0; t < ch.frames.size(); ++t)
                phase_opt[c][t].step(ch.frames[t].phase, evals[c].phase_grad[t]);
            double s = ch.global_scale;
            const double gs = evals[c].scale_grad;
            scale_opt[c].step(std::span<double>{&s, 1}, std::span<const double>{&gs, 1});
            ch.global_scale = std::max(s, 1e-9);
        }
    }
    return result;
}

Image normalize_laser_profile(Image profile) {
    if (profile.data.empty()) throw InputError("laser profile is empty");
    double sum = 0.0;
    for (double v : profile.data) {
        if (!std::isfinite(v) || !(v > 0.0)) throw InputError("laser profile entries must be positive");
        sum += v;
    }
    const double mean = sum / static_cast<double>(profile.size());
    for (double& v : profile.data) v /= mean;
    return profile;
}

Image load_laser_profile(const std::filesystem::path& path, int width, int height) {
    if (path.empty()) return Image{width, height, 1.0};
    Image img = path.extension() == ".pfm" ? read_pfm_gray(path) : read_raw_f32(path, width, height);
    if (img.width != width || img.height != height)
        throw InputError("laser profile " + path.string() + " is " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + ", SLM is " + std::to_string(width) + "x" +
                         std::to_string(height));
    return normalize_laser_profile(std::move(img));
}

std::uint8_t quantize_phase(double phase) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(phase, two_pi);
    if (w < 0.0) w += two_pi;
    return static_cast<std::uint8_t>(std::lround(w / two_pi * 256.0) % 256);
}

double dequantize_phase(std::uint8_t level) { return 2.0 * std::numbers::pi * level / 256.0; }

HologramBatch quantized(const HologramBatch& batch) {
    HologramBatch out = batch;
    for (auto& ch : out.channels)
        for (auto& f : ch.frames)
            for (double& p : f.phase) p = dequantize_phase(quantize_phase(p));
    return out;
}

} // namespace ergoholo
