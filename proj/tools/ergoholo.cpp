#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ergoholo/config.hpp"
#include "ergoholo/errors.hpp"
#include "ergoholo/evalsuite.hpp"
#include "ergoholo/image_io.hpp"
#include "ergoholo/incoherent_render.hpp"
#include "ergoholo/optimizer.hpp"
#include "ergoholo/persistence.hpp"

namespace fs = std::filesystem;
using namespace ergoholo;

namespace {

struct Overrides {
    std::string config;
    std::optional<int> threads;
    std::string log_level = "info";
    std::optional<std::string> out;
    bool overwrite = false;

    // scene / optics
    std::optional<std::string> ldi, thickness, pitch, wavelengths, max_angle;
    std::optional<int> planes, orders;
    std::optional<std::string> laser_profile;

    // optimize
    std::optional<std::string> targets;
    bool render_first = false;
    std::optional<int> iterations, frames, pupils_fixed, pupils_random;
    std::optional<std::uint64_t> seed;
    std::optional<double> step_size;
    std::optional<std::string> plane_indices, loss_norm, scale_mode, base_radius;
    std::vector<std::string> ablations;

    // eval / sweep
    std::optional<std::string> batch, radius, z_from, z_to, pupil_x, pupil_y, pupil_radius;
    std::optional<int> grid_n, steps;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss{s};
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

RunConfig resolve(const Overrides& o, std::optional<RunConfig> base = {}) {
    RunConfig rc = !o.config.empty() ? load_run_config(o.config) : base.value_or(RunConfig{});
    if (o.threads) rc.threads = *o.threads;
    if (o.out) rc.io.output_dir = *o.out;
    if (o.overwrite) rc.io.overwrite = true;
    if (o.ldi) rc.scene.ldi = *o.ldi;
    if (o.thickness) rc.scene.volume_thickness = parse_length(*o.thickness);
    if (o.planes) rc.scene.plane_count = *o.planes;
    if (o.max_angle) rc.scene.mask.max_angle = std::stod(*o.max_angle);
    if (o.pitch) rc.optics.pitch = parse_length(*o.pitch);
    if (o.wavelengths) {
        rc.optics.wavelengths.clear();
        for (const auto& w : split_list(*o.wavelengths)) rc.optics.wavelengths.push_back(parse_length(w));
    }
    if (o.orders) rc.optics.orders = *o.orders;
    if (o.laser_profile) rc.optics.laser_profile = *o.laser_profile;
    if (o.targets) rc.io.targets = *o.targets;
    if (o.batch) rc.io.batch = *o.batch;

    auto& opt = rc.optimize;
    if (o.iterations) opt.iterations = *o.iterations;
    if (o.frames) opt.frames = *o.frames;
    if (o.pupils_fixed) opt.pupils_fixed = *o.pupils_fixed;
    if (o.pupils_random) opt.pupils_random = *o.pupils_random;
    if (o.pupils_fixed || o.pupils_random) opt.pupils_total = opt.pupils_fixed + opt.pupils_random;
    if (o.seed) opt.seed = *o.seed;
    if (o.step_size) opt.step_size = *o.step_size;
    if (o.base_radius) opt.base_radius = parse_length(*o.base_radius);
    if (o.plane_indices) {
        opt.plane_indices.clear();
        for (const auto& s : split_list(*o.plane_indices)) opt.plane_indices.push_back(std::stoi(s));
    }
    if (o.loss_norm) {
        if (*o.loss_norm == "l1")
            opt.loss_norm = LossNorm::l1;
        else if (*o.loss_norm == "l2")
            opt.loss_norm = LossNorm::l2;
        else
            throw InputError("--loss-norm must be l1 or l2");
    }
    if (o.scale_mode) {
        if (*o.scale_mode == "amplitude")
            opt.scale_mode = ScaleMode::amplitude;
        else if (*o.scale_mode == "phase")
            opt.scale_mode = ScaleMode::phase;
        else
            throw InputError("--scale-mode must be amplitude or phase");
    }
    for (const auto& a : o.ablations) {
        if (a == "center-pupil-only")
            opt.center_pupil_only = true;
        else if (a == "no-pupils")
            opt.disable_pupils = true;
        else if (a == "no-time-multiplexing")
            opt.disable_time_multiplexing = true;
        else if (a == "no-high-orders")
            opt.disable_high_orders = true;
        else
            throw InputError("unknown ablation \"" + a + "\"");
    }

    if (o.grid_n) rc.eval.grid_n = *o.grid_n;
    if (o.radius) rc.eval.radius = parse_length(*o.radius);
    if (o.z_from) rc.eval.sweep_start = parse_length(*o.z_from);
    if (o.z_to) rc.eval.sweep_end = parse_length(*o.z_to);
    if (o.steps) rc.eval.sweep_steps = *o.steps;
    if (o.pupil_x) rc.eval.sweep_pupil_x = parse_length(*o.pupil_x);
    if (o.pupil_y) rc.eval.sweep_pupil_y = parse_length(*o.pupil_y);
    if (o.pupil_radius) rc.eval.sweep_pupil_radius = parse_length(*o.pupil_radius);

    rc.optimize = rc.optimizer_config();
    rc.validate();
    return rc;
}

void prepare_output(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir) && !fs::is_directory(dir))
        throw InputError("output path " + dir.string() + " is not a directory");
    if (fs::exists(dir) && !fs::is_empty(dir) && !overwrite)
        throw InputError("output directory " + dir.string() + " is not empty; pass --overwrite");
    fs::create_directories(dir);
}

int color_for(double wavelength) {
    if (wavelength > 590e-9) return 0;
    if (wavelength > 490e-9) return 1;
    return 2;
}

FocalStack run_render(RunConfig& rc, const fs::path& out) {
    if (rc.scene.ldi.empty()) throw InputError("no LDI given (scene.ldi or --ldi)");
    auto ldi = load_ldi(rc.scene.ldi);
    if (rc.scene.volume_thickness) ldi.volume_thickness = *rc.scene.volume_thickness;
    rc.scene.volume_thickness = ldi.volume_thickness;
    if (std::abs(ldi.pitch - rc.optics.pitch) > 1e-12)
        spdlog::warn("LDI pitch {} m differs from optics pitch {} m; rendering at the LDI pitch", ldi.pitch,
                     rc.optics.pitch);

    const auto planes = even_planes(ldi.volume_thickness, rc.scene.plane_count);
    auto settings = rc.render_settings();
    for (double w : rc.optics.wavelengths) settings.color_channels.push_back(color_for(w));
    if (settings.kernel_grid == 0)
        settings.kernel_grid = auto_kernel_grid(ldi, planes, rc.optics.wavelengths, settings.mask);
    const double tolerance =
        settings.depth_tolerance.value_or(default_depth_tolerance(ldi.volume_thickness, rc.scene.plane_count));
    settings.depth_tolerance = tolerance;

    spdlog::info("rendering {}x{} LDI with {} layers onto {} planes", ldi.width, ldi.height, ldi.layers.size(),
                 planes.size());
    auto stack = render_focal_stack(ldi, planes, rc.optics.wavelengths, settings);
    save_focal_stack(out, stack);

    nlohmann::json angles = nlohmann::json::array();
    for (double w : rc.optics.wavelengths) angles.push_back(settings.mask.resolve_angle(w, ldi.pitch));
    write_json(out / "render.json", {{"config", to_json(rc)},
                                     {"resolved",
                                      {{"kernel_grid", settings.kernel_grid},
                                       {"depth_tolerance", tolerance},
                                       {"mask_angles", angles},
                                       {"color_channels", settings.color_channels},
                                       {"pitch", ldi.pitch}}}});
    return stack;
}

int cmd_render(const Overrides& o) {
    auto rc = resolve(o);
    prepare_output(rc.io.output_dir, rc.io.overwrite);
    run_render(rc, rc.io.output_dir);
    spdlog::info("wrote focal stack to {}", rc.io.output_dir.string());
    return 0;
}

BatchManifest manifest_for(const RunConfig& rc, const OptimizeResult& result) {
    const auto eff = rc.optimize.effective();
    BatchManifest m;
    m.config = to_json(rc);
    m.seed = eff.seed;
    if (!eff.disable_pupils) {
        m.fixed_pupils = fixed_pupils(eff);
        m.random_pupils = eff.pupils_random;
    }
    m.best_iteration = result.best_iteration;
    return m;
}

int cmd_optimize(const Overrides& o) {
    auto rc = resolve(o);
    const fs::path out = rc.io.output_dir;
    prepare_output(out, rc.io.overwrite);

    FocalStack targets;
    if (o.render_first) {
        targets = run_render(rc, out / "targets");
        rc.io.targets = out / "targets";
    } else {
        if (rc.io.targets.empty()) throw InputError("no target stack given (io.targets or --targets)");
        targets = load_focal_stack(rc.io.targets);
    }
    rc.optics.wavelengths = targets.wavelengths;
    if (rc.optimize.plane_indices.empty())
        rc.optimize.plane_indices = even_plane_indices(static_cast<int>(targets.plane_count()));
    rc.validate();

    ScaleSet scales;
    if (!rc.optics.laser_profile.empty())
        scales.laser_profile = load_laser_profile(rc.optics.laser_profile, targets.width, targets.height);

    const auto cfg = rc.optimizer_config();
    const int report_every = std::max(1, cfg.iterations / 20);
    auto progress = [&](const LossRecord& r) {
        if (r.iteration % report_every == 0 || r.iteration + 1 == cfg.iterations)
            spdlog::info("iteration {:5d}  loss {:.6e}  best {:.6e}  {:.0f} ms", r.iteration, r.loss, r.best_loss,
                         r.wall_ms);
    };

    try {
        const auto result = optimize(cfg, targets, scales, {}, progress);
        save_batch(out, result.batch, manifest_for(rc, result));
        save_loss_csv(out / "loss.csv", result.history);
    } catch (const OptimizationDiverged& e) {
        save_batch(out, e.partial().batch, manifest_for(rc, e.partial()));
        save_loss_csv(out / "loss.csv", e.partial().history);
        spdlog::error("kept the last good iterate in {}", out.string());
        throw;
    }
    spdlog::info("wrote hologram batch to {}", out.string());
    return 0;
}

RunConfig config_from_batch(const Overrides& o) {
    if (!o.batch && o.config.empty()) throw InputError("no hologram batch given (--batch)");
    std::optional<RunConfig> base;
    if (o.batch) {
        const auto m = load_batch_manifest(*o.batch);
        if (m.contains("config")) base = run_config_from_json(m.at("config"));
    }
    auto rc = resolve(o, base);
    if (o.batch) rc.io.batch = *o.batch;
    if (rc.io.batch.empty()) throw InputError("no hologram batch given (--batch)");
    return rc;
}

ScaleSet scales_for(const RunConfig& rc, const HologramBatch& batch) {
    ScaleSet scales;
    if (!rc.optics.laser_profile.empty())
        scales.laser_profile = load_laser_profile(rc.optics.laser_profile, batch.width(), batch.height());
    return scales;
}

int cmd_eval(const Overrides& o) {
    auto rc = config_from_batch(o);
    if (rc.io.targets.empty()) throw InputError("no target stack given (--targets)");
    const auto batch = load_batch(rc.io.batch);
    const auto targets = load_focal_stack(rc.io.targets);
    prepare_output(rc.io.output_dir, rc.io.overwrite);

    const auto cfg = rc.optimizer_config();
    const auto supervised = cfg.plane_indices.empty() ? targets : targets.select_planes(cfg.plane_indices);
    const auto scales = scales_for(rc, batch);

    auto report = eyebox_sweep(batch, supervised, rc.eval.grid_n, rc.eval.radius, scales, cfg);
    std::vector<Aperture> fixed;
    for (const auto& p : fixed_pupils(cfg)) fixed.push_back(p);
    if (cfg.effective().disable_pupils) fixed = {std::nullopt};
    report.loss_values.push_back(forward_loss(batch, fixed, supervised, scales, cfg).loss);

    save_metric_report(rc.io.output_dir / "report.json", report);
    save_psnr_grid_csv(rc.io.output_dir / "psnr_grid.csv", report);
    spdlog::info("PSNR over {} pupils: min {:.2f} dB, mean {:.2f} dB, max {:.2f} dB ({:.0f} ms)",
                 report.cells.size(), report.min_psnr, report.mean_psnr, report.max_psnr, report.runtime_ms);
    return 0;
}

int cmd_sweep(const Overrides& o) {
    auto rc = config_from_batch(o);
    const auto batch = load_batch(rc.io.batch);
    prepare_output(rc.io.output_dir, rc.io.overwrite);

    const auto& ev = rc.eval;
    Aperture pupil;
    if (ev.sweep_pupil_radius > 0.0)
        pupil = PupilSpec{ev.sweep_pupil_x, ev.sweep_pupil_y, ev.sweep_pupil_radius, PupilKind::fixed};
    const auto frames =
        focal_sweep(batch, pupil, ev.sweep_start, ev.sweep_end, ev.sweep_steps, scales_for(rc, batch),
                    rc.optimizer_config());

    nlohmann::json index = nlohmann::json::array();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const auto& f = frames[i];
        const int n = static_cast<int>(frames.size());
        const std::string png = sweep_frame_name(static_cast<int>(i), n);
        const std::string raw = sweep_frame_name(static_cast<int>(i), n, ".f32");
        const int w = f.amplitude.front().width;
        const int h = f.amplitude.front().height;
        std::vector<Image> intensity = f.amplitude;
        for (auto& img : intensity)
            for (double& v : img.data) v *= v;
        if (intensity.size() == 1 || intensity.size() == 3)
            write_png8(rc.io.output_dir / png, w, h, static_cast<int>(intensity.size()), tone_map(intensity));
        else
            write_png8(rc.io.output_dir / png, w, h, 1, tone_map({intensity.front()}));
        write_raw_f32(rc.io.output_dir / raw, intensity);
        index.push_back({{"index", i}, {"depth", f.depth}, {"png", png}, {"raw", raw}});
    }
    write_json(rc.io.output_dir / "sweep.json", {{"config", to_json(rc)}, {"frames", index}});
    spdlog::info("wrote {} sweep frames to {}", frames.size(), rc.io.output_dir.string());
    return 0;
}

int cmd_oracle_check() {
    bool ok = true;
    for (const auto& r : {propagate_oracle_suite(), gradient_oracle_suite()}) {
        std::printf("%s  %-44s  worst %.3e  tolerance %.1e  (%.2f s)\n", r.passed ? "PASS" : "FAIL",
                    r.name.c_str(), r.value, r.tolerance, r.seconds);
        ok = ok && r.passed;
    }
    return ok ? 0 : 3;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_st("ergoholo"));

    CLI::App app{"Incoherent focal-stack rendering and multi-pupil hologram optimization"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--threads", o.threads, "Worker threads (default: ERGOHOLO_THREADS or all cores)");
    app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off");

    auto add_output = [&](CLI::App* sub) {
        sub->add_option("-o,--out", o.out, "Output directory");
        sub->add_flag("--overwrite", o.overwrite, "Allow writing into a non-empty output directory");
    };
    auto add_scene = [&](CLI::App* sub) {
        sub->add_option("--ldi", o.ldi, "LDI directory or manifest");
        sub->add_option("--thickness", o.thickness, "Volume thickness, e.g. 4mm");
        sub->add_option("--planes", o.planes, "Number of rendered planes");
        sub->add_option("--max-angle", o.max_angle, "Kernel cone half-angle in radians (0: diffraction limit)");
        sub->add_option("--pitch", o.pitch, "Pixel pitch, e.g. 8um");
        sub->add_option("--wavelengths", o.wavelengths, "Comma-separated wavelengths, e.g. 632nm,520nm,450nm");
    };

    auto* render = app.add_subcommand("render", "Render a focal stack from an LDI");
    add_output(render);
    add_scene(render);

    auto* opt = app.add_subcommand("optimize", "Optimize a time-multiplexed hologram batch");
    add_output(opt);
    add_scene(opt);
    opt->add_option("--targets", o.targets, "Focal stack directory");
    opt->add_flag("--render-first", o.render_first, "Render the targets from --ldi first");
    opt->add_option("--iterations", o.iterations, "Gradient steps");
    opt->add_option("--frames", o.frames, "Time-multiplexed frames per channel");
    opt->add_option("--orders", o.orders, "Diffraction orders per axis (odd)");
    opt->add_option("--seed", o.seed, "Seed for the initial phases and random pupils");
    opt->add_option("--step-size", o.step_size, "Adam step size");
    opt->add_option("--plane-indices", o.plane_indices, "Comma-separated supervised plane indices");
    opt->add_option("--pupils-fixed", o.pupils_fixed, "Fixed grid pupils per iteration");
    opt->add_option("--pupils-random", o.pupils_random, "Random pupils per iteration");
    opt->add_option("--pupil-radius", o.base_radius, "Base pupil radius, e.g. 2mm");
    opt->add_option("--loss-norm", o.loss_norm, "l2 or l1");
    opt->add_option("--scale-mode", o.scale_mode, "amplitude or phase");
    opt->add_option("--laser-profile", o.laser_profile, "PFM or raw float32 illumination map");
    opt->add_option("--ablation", o.ablations,
                    "center-pupil-only, no-pupils, no-time-multiplexing or no-high-orders (repeatable)");

    auto* eval = app.add_subcommand("eval", "PSNR over a lattice of eye-box pupils");
    add_output(eval);
    eval->add_option("--batch", o.batch, "Hologram batch directory")->required();
    eval->add_option("--targets", o.targets, "Focal stack directory");
    eval->add_option("--grid-n", o.grid_n, "Lattice size per axis");
    eval->add_option("--radius", o.radius, "Pupil radius, e.g. 2mm");

    auto* sweep = app.add_subcommand("sweep", "Focal sweep through the reconstructed volume");
    add_output(sweep);
    sweep->add_option("--batch", o.batch, "Hologram batch directory")->required();
    sweep->add_option("--from", o.z_from, "First depth, e.g. 0mm");
    sweep->add_option("--to", o.z_to, "Last depth, e.g. 4mm");
    sweep->add_option("--steps", o.steps, "Number of frames");
    sweep->add_option("--pupil-x", o.pupil_x, "Pupil center x, e.g. 1mm");
    sweep->add_option("--pupil-y", o.pupil_y, "Pupil center y, e.g. 0mm");
    sweep->add_option("--pupil-radius", o.pupil_radius, "0 disables the pupil");

    auto* oracle = app.add_subcommand("oracle-check", "Run the propagation and gradient oracle suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(o.log_level));
        if (*render) return cmd_render(o);
        if (*opt) return cmd_optimize(o);
        if (*eval) return cmd_eval(o);
        if (*sweep) return cmd_sweep(o);
        if (*oracle) return cmd_oracle_check();
    } catch (const InputError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const NumericalError& e) {
        spdlog::error("{}", e.what());
        return 3;
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
