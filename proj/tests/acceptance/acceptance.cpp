// Acceptance run: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ergoholo/evalsuite.hpp"
#include "ergoholo/incoherent_render.hpp"
#include "ergoholo/optimizer.hpp"
#include "ergoholo/wave_optics.hpp"
#include "oracles.hpp"

using namespace ergoholo;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double total(const Image& im) {
    double s = 0.0;
    for (double v : im.data) s += v;
    return s;
}

void criterion1() {
    const auto r = propagate_oracle_suite(20, 7, 1e-10);
    report(1, r.passed && r.seconds < 5.0, fmt("max abs diff %.3e (< 1e-10), %.2f s (< 5 s)", r.value, r.seconds));
}

void criterion2() {
    const auto r = gradient_oracle_suite(5, 11, 1e-4);
    report(2, r.passed && r.seconds < 60.0, fmt("max rel err %.3e (< 1e-4), %.2f s (< 60 s)", r.value, r.seconds));
}

void criterion3() {
    // Points farther apart and from the border than the widest blur disk.
    LayeredDepthImage ldi{200, 160, 8e-6, 4e-3};
    ldi.add_layer();
    std::mt19937_64 gen{11};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    std::uniform_int_distribution<int> jitter{-2, 2};
    for (int i = 0; i < 10; ++i)
        ldi.set(0, 28 + 36 * (i % 5) + jitter(gen), 40 + 60 * (i / 5) + jitter(gen), {u(gen), u(gen), u(gen)},
                4e-3 * u(gen));
    double expected[3] = {0, 0, 0};
    for (std::size_t i = 0; i < ldi.layers[0].color.size(); ++i)
        if (ldi.layers[0].valid[i])
            for (int c = 0; c < 3; ++c) expected[c] += ldi.layers[0].color[i][c];
    const auto planes = even_planes(4e-3, 32);
    const auto st = render_focal_stack(ldi, planes, {632e-9, 520e-9, 450e-9});
    double worst = 0.0;
    for (std::size_t k = 0; k < planes.size(); ++k)
        for (int c = 0; c < 3; ++c)
            worst = std::max(worst, std::abs(total(st.planes[k][c]) - expected[c]) / expected[c]);
    report(3, worst < 1e-6, fmt("worst per-plane relative energy error %.3e (< 1e-6)", worst));
}

void criterion4() {
    const int n = 64;
    const double pitch = 8e-6;
    std::mt19937_64 gen{17};
    std::uniform_real_distribution<double> z{0.0, 4e-3};
    const double wls[] = {632e-9, 520e-9, 450e-9};
    double worst = 0.0;
    bool zeros_ok = true;
    for (int t = 0; t < 20; ++t) {
        const double zp = z(gen), plane = z(gen), wl = wls[t % 3];
        const auto k = incoherent_kernel(zp, plane, wl, MaskSpec{}, KernelGrid{n, pitch});
        ComplexField point{n, n, pitch, wl};
        point.at(n / 2, n / 2) = 1.0;
        const auto field = propagate(point, zp - plane, Padding::none);
        const double angle = std::asin(wl / (2.0 * pitch));
        std::vector<double> ref(static_cast<std::size_t>(n) * n, 0.0);
        double s = 0.0;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (testing::in_blur_disk(x - n / 2, y - n / 2, zp - plane, angle, pitch)) {
                    ref[y * n + x] = std::norm(field.at(x, y));
                    s += ref[y * n + x];
                }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            ref[i] /= s;
            if (ref[i] > 0.0) worst = std::max(worst, std::abs(k.values[i] - ref[i]) / ref[i]);
            else zeros_ok = zeros_ok && k.values[i] == 0.0;
        }
    }
    report(4, zeros_ok && worst < 1e-9, fmt("worst relative error %.3e (< 1e-9) over 20 triples", worst));
}

void criterion5() {
    // Occluder x <= 20 at zf, background point at zb, plane at 0.
    const double zf = 1e-3, zb = 3.5e-3;
    const int n = 48, sx = 24, sy = 24;
    LayeredDepthImage ldi{n, n, 8e-6, 4e-3};
    ldi.add_layer();
    ldi.add_layer();
    for (int y = 0; y < n; ++y)
        for (int x = 0; x <= 20; ++x) ldi.set(0, x, y, {0, 0, 0}, zf);
    ldi.set(1, sx, sy, {1, 1, 1}, zb);
    RenderSettings rs;
    rs.mask.max_angle = 0.1;
    const auto st = render_focal_stack(ldi, {0.0}, {520e-9}, rs);
    const auto& img = st.planes[0][0];
    const double s = (zb - zf) / zb;
    const double predicted = sx + (20.5 - sx) / s;
    bool dark = true;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (x < predicted - 1.0 && img.at(x, y) != 0.0) dark = false;
    int first = -1;
    for (int x = 0; x < n && first < 0; ++x)
        if (img.at(x, sy) > 0.0) first = x;
    const bool edge = first >= 0 && std::abs(first - predicted) <= 1.0;
    report(5, dark && edge,
           fmt("shadowed samples %s, first lit x %d vs predicted %.2f (within 1)", dark ? "all zero" : "LIT", first,
               predicted));
}

void criterion6() {
    // One diffraction order spans 1/p in frequency; the eyepiece maps it to
    // lambda f times that extent.
    const double wl = 632e-9, f = 0.08, p = 8e-6;
    const auto grid = supersampled_grid(64, 64, p, 1);
    const double band = grid.width * grid.dfx();
    const double extent = wl * f * band;
    const double rel = std::abs(extent - 6.4e-3) / 6.4e-3;
    report(6, rel < 0.02, fmt("eye box %.4f mm vs 6.4 mm, deviation %.2f%% (< 2%%)", extent * 1e3, rel * 100));
}

LayeredDepthImage two_layer_scene(int n) {
    LayeredDepthImage ldi{n, n, 8e-6, 4e-3};
    ldi.add_layer();
    ldi.add_layer();
    std::mt19937_64 gen{42};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            if (std::hypot(x - n / 2.0, y - n / 2.0) < n / 4.0) ldi.set(0, x, y, {u(gen), 0.8, 0.2}, 1e-3);
            ldi.set(1, x, y, {0.2, u(gen), 0.5 * u(gen)}, 3e-3 + 0.5e-3 * x / n);
        }
    return ldi;
}

OptimizerConfig desk_config() {
    OptimizerConfig cfg;
    cfg.frames = 3;
    cfg.orders = 3;
    cfg.pupils_total = 9;
    cfg.pupils_fixed = 4;
    cfg.pupils_random = 5;
    cfg.iterations = 300;
    cfg.seed = 1;
    return cfg;
}

OptimizeResult run(const OptimizerConfig& cfg, const FocalStack& targets, const char* tag) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = optimize(cfg, targets, ScaleSet{}, std::nullopt, [&](const LossRecord& r) {
        if (r.iteration % 50 == 0 || r.iteration + 1 == cfg.iterations)
            std::fprintf(stderr, "[%s] iter %d loss %.6e best %.6e %.0f s\n", tag, r.iteration, r.loss,
                         r.best_loss, seconds_since(t0));
    });
    return res;
}

double center_psnr(const HologramBatch& batch, const FocalStack& targets, const OptimizerConfig& cfg) {
    return eyebox_sweep(batch, targets, 1, 2e-3, ScaleSet{}, cfg).mean_psnr;
}

void check_lock(double psnr, bool green) {
    const std::filesystem::path path{ERGOHOLO_LOCK};
    if (std::filesystem::exists(path)) {
        std::ifstream in{path};
        const auto j = nlohmann::json::parse(in);
        const double locked = j.at("mean_psnr_db").get<double>();
        const double d = std::abs(psnr - locked);
        report(7, green && d <= 0.1,
               fmt("mean in-focus PSNR %.4f dB vs locked %.4f dB, |diff| %.4f dB (<= 0.1)", psnr, locked, d));
        return;
    }
    if (green) {
        std::ofstream out{path};
        out << nlohmann::json{{"mean_psnr_db", psnr}}.dump(2) << "\n";
        std::printf("locked mean in-focus PSNR %.4f dB to %s\n", psnr, path.c_str());
    }
    report(7, green, fmt("mean in-focus PSNR %.4f dB (first run, lock %s)", psnr, green ? "written" : "not written"));
}

} // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();

    const auto ldi = two_layer_scene(256);
    RenderSettings rs;
    rs.color_channels = {1};
    const auto stack = render_focal_stack(ldi, even_planes(4e-3, 6), {520e-9}, rs);

    // 7: desk-scale regression.
    const auto cfg = desk_config();
    const auto t0 = std::chrono::steady_clock::now();
    const auto res = run(cfg, stack, "T=3");
    const double secs = seconds_since(t0);
    const double initial = res.history.front().loss;
    const double best = res.history.back().best_loss;
    const double ratio = best / initial;
    const double psnr = center_psnr(res.batch, stack, cfg);
    const bool green = ratio < 0.25 && secs < 900.0;
    std::printf("criterion  7 detail: loss %.4e -> %.4e (%.1f%% of initial, < 25%%), %.0f s (< 900 s)\n", initial,
                best, ratio * 100, secs);
    check_lock(psnr, green);

    // 8: time multiplexing at equal per-frame budget.
    {
        auto c1 = desk_config();
        c1.iterations = 60;
        c1.frames = 1;
        auto c5 = c1;
        c5.frames = 5;
        const auto r1 = run(c1, stack, "T=1");
        const auto r5 = run(c5, stack, "T=5");
        std::vector<Aperture> fixed;
        for (const auto& p : fixed_pupils(c1)) fixed.emplace_back(p);
        const double l1 = forward_loss(r1.batch, fixed, stack, ScaleSet{}, c1).loss;
        const double l5 = forward_loss(r5.batch, fixed, stack, ScaleSet{}, c5).loss;
        report(8, l5 <= l1, fmt("fixed-pupil loss T=5 %.6e <= T=1 %.6e after 60 iterations", l5, l1));
    }

    // 9: eye-box coverage against center-only optimization.
    {
        auto cc = cfg;
        cc.center_pupil_only = true;
        const auto rc = run(cc, stack, "center");
        const double multi = eyebox_sweep(res.batch, stack, 3, 2e-3, ScaleSet{}, cfg).min_psnr;
        const double center = eyebox_sweep(rc.batch, stack, 3, 2e-3, ScaleSet{}, cfg).min_psnr;
        report(9, multi >= center, fmt("min lattice PSNR multi-pupil %.3f dB >= center-only %.3f dB", multi, center));
    }

    // 10: 8-bit export.
    {
        const double q = center_psnr(quantized(res.batch), stack, cfg);
        const double d = std::abs(q - psnr);
        report(10, d < 0.5, fmt("PSNR %.4f dB quantized vs %.4f dB, |diff| %.4f dB (< 0.5)", q, psnr, d));
    }

    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
