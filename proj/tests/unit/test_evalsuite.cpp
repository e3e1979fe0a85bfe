#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ergoholo/errors.hpp"
#include "ergoholo/evalsuite.hpp"
#include "ergoholo/fft.hpp"
#include "ergoholo/wave_optics.hpp"
#include "oracles.hpp"

using namespace ergoholo;

namespace {

constexpr double pi = std::numbers::pi;

Image constant(int n, double v) { return Image{n, n, v}; }

HologramBatch single(PhasePattern p, double wl = 520e-9) {
    return HologramBatch{{HologramChannel{wl, {std::move(p)}, 1.0}}};
}

} // namespace

TEST_SUITE("psnr") {
    TEST_CASE("identical images are flagged infinite") {
        const auto v = psnr(constant(4, 0.3), constant(4, 0.3), 1.0);
        CHECK(v.identical);
        CHECK(std::isinf(v.db));
    }

    TEST_CASE("closed forms") {
        CHECK(psnr(constant(8, 0.5), constant(8, 0.0), 1.0).db == doctest::Approx(10.0 * std::log10(4.0)));
        CHECK(psnr(constant(8, 0.5), constant(8, 0.0), 1.0).db == doctest::Approx(6.0206).epsilon(1e-4));
        CHECK(psnr(constant(8, std::sqrt(1e-3)), constant(8, 0.0), 1.0).db == doctest::Approx(30.0));
    }

    TEST_CASE("decreases strictly with noise amplitude") {
        std::mt19937_64 gen{3};
        std::normal_distribution<double> noise{0.0, 1.0};
        Image target{32, 32};
        for (double& v : target.data) v = std::uniform_real_distribution<double>{0, 1}(gen);
        Image unit{32, 32};
        for (double& v : unit.data) v = noise(gen);
        double prev = std::numeric_limits<double>::infinity();
        for (double sigma : {0.01, 0.05, 0.2}) {
            Image img = target;
            for (std::size_t i = 0; i < img.size(); ++i) img.data[i] += sigma * unit.data[i];
            const double db = psnr(img, target, 1.0).db;
            CHECK(db < prev);
            prev = db;
        }
    }

    TEST_CASE("mismatched shapes are rejected") {
        CHECK_THROWS_AS(psnr(Image{3, 3}, Image{3, 4}, 1.0), InputError);
    }
}

TEST_SUITE("dft_oracle") {
    TEST_CASE("zero distance projects onto the propagating band") {
        const auto f = testing::random_field(8, 8, 0.3e-6, 520e-9, 2);
        const auto out = dft_oracle(f, 0.0);
        auto spec = testing::naive_dft(f.data, 8, 8, -1);
        const auto grid = FrequencyGrid::of(8, 8, 0.3e-6);
        int cut = 0;
        for (int j = 0; j < 8; ++j)
            for (int i = 0; i < 8; ++i)
                if (grid.fx(i) * grid.fx(i) + grid.fy(j) * grid.fy(j) >= 1.0 / (520e-9 * 520e-9)) {
                    spec[j * 8 + i] = 0.0;
                    ++cut;
                }
        CHECK(cut > 0);
        auto proj = testing::naive_dft(spec, 8, 8, 1);
        for (auto& v : proj) v /= 64.0;
        CHECK(testing::max_abs_diff(out.data, proj) < 1e-12);
    }

    TEST_CASE("impulse response is the sampled coherent PSF") {
        ComplexField f{8, 8, 8e-6, 632e-9};
        f.at(0, 0) = 1.0;
        const auto out = dft_oracle(f, 1.5e-3);
        auto psf = coherent_kernel(FrequencyGrid::of(8, 8, 8e-6), 632e-9, 1.5e-3).values;
        psf = testing::naive_dft(psf, 8, 8, 1);
        for (auto& v : psf) v /= 64.0;
        CHECK(testing::max_abs_diff(out.data, psf) < 1e-12);
    }

    TEST_CASE("agrees with propagate on 20 random fields") {
        const auto r = propagate_oracle_suite(20, 7, 1e-10);
        CHECK(r.value < 1e-10);
    }

    TEST_CASE("refuses grids beyond 16x16") {
        CHECK_THROWS_AS(dft_oracle(ComplexField{17, 4, 8e-6, 520e-9}, 1e-3), InputError);
        CHECK_NOTHROW(dft_oracle(ComplexField{16, 16, 8e-6, 520e-9}, 1e-3));
    }
}

TEST_SUITE("simulate_reconstruction") {
    TEST_CASE("single frame is the field modulus per plane") {
        PhasePattern p{12, 12, 8e-6};
        std::mt19937_64 gen{4};
        for (double& v : p.phase) v = std::uniform_real_distribution<double>{0, 2 * pi}(gen);
        OptimizerConfig c;
        c.frames = 1;
        const PupilSpec pupil{0.5e-3, 0.0, 3e-3};
        const auto st = simulate_reconstruction(single(p), pupil, {1e-3, 2e-3}, {}, c);
        OpticsSettings s;
        for (int k = 0; k < 2; ++k) {
            const auto u = reconstruct_plane(p, pupil, k == 0 ? 1e-3 : 2e-3, s);
            for (std::size_t i = 0; i < u.data.size(); ++i)
                CHECK(st.planes[k][0].data[i] == doctest::Approx(std::abs(u.data[i]) / 1.5).epsilon(1e-10));
        }
    }

    TEST_CASE("flat phase, one order, no iris is a uniform plane") {
        OptimizerConfig c;
        c.orders = 1;
        c.frames = 1;
        const auto st = simulate_reconstruction(single(PhasePattern{16, 16, 8e-6, 1.1}), std::nullopt, {3e-3}, {}, c);
        for (double v : st.planes[0][0].data) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }

    TEST_CASE("upsampling follows the model's pixel alignment") {
        Image img{4, 3};
        for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<double>(i);
        const auto up = upsample_nearest(img, 3);
        CHECK(up.width == 12);
        ReconstructionModel model{4, 3, {1e-3}, {}};
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 12; ++x) CHECK(up.at(x, y) == img.at(model.slm_index(x, 4), model.slm_index(y, 3)));
    }
}

TEST_SUITE("focal_sweep") {
    OptimizerConfig lens_config() {
        OptimizerConfig c;
        c.orders = 1;
        c.frames = 1;
        c.sinc_envelope = false;
        return c;
    }

    // Fresnel lens focusing at z0, sampled without aliasing.
    HologramBatch lens(int n, double z0) {
        PhasePattern p{n, n, 8e-6};
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double rx = (x - n / 2) * 8e-6, ry = (y - n / 2) * 8e-6;
                p.phase[y * n + x] = -pi * (rx * rx + ry * ry) / (520e-9 * z0);
            }
        return single(p);
    }

    TEST_CASE("two steps are exactly the endpoints") {
        const auto b = lens(16, 6e-3);
        const auto frames = focal_sweep(b, std::nullopt, 1e-3, 3e-3, 2, {}, lens_config());
        REQUIRE(frames.size() == 2);
        CHECK(frames[0].depth == 1e-3);
        CHECK(frames[1].depth == 3e-3);
        const auto direct = simulate_reconstruction(b, std::nullopt, {3e-3}, {}, lens_config());
        CHECK(frames[1].amplitude[0].data == direct.planes[0][0].data);
    }

    TEST_CASE("reversed range reverses the frames") {
        const auto b = lens(16, 6e-3);
        const auto fwd = focal_sweep(b, std::nullopt, 0.0, 4e-3, 5, {}, lens_config());
        const auto rev = focal_sweep(b, std::nullopt, 4e-3, 0.0, 5, {}, lens_config());
        for (int i = 0; i < 5; ++i) {
            CHECK(fwd[i].depth == doctest::Approx(rev[4 - i].depth));
            CHECK(fwd[i].amplitude[0].data == rev[4 - i].amplitude[0].data);
        }
    }

    TEST_CASE("sharpness peaks at the frame nearest the focus") {
        const double z0 = 6e-3;
        const auto frames = focal_sweep(lens(48, z0), std::nullopt, 0.0, 12e-3, 13, {}, lens_config());
        std::size_t best = 0;
        double best_e = -1.0;
        for (std::size_t i = 0; i < frames.size(); ++i) {
            Image intensity = frames[i].amplitude[0];
            for (double& v : intensity.data) v *= v;
            const double e = gradient_energy(intensity);
            if (e > best_e) {
                best_e = e;
                best = i;
            }
        }
        CHECK(frames[best].depth == doctest::Approx(z0));
    }

    TEST_CASE("frame names are zero padded") {
        CHECK(sweep_frame_name(3, 16) == "frame_0003.png");
        CHECK(sweep_frame_name(12, 16, ".f32") == "frame_0012.f32");
        CHECK(sweep_frame_name(7, 20000) == "frame_00007.png");
        CHECK_THROWS_AS(focal_sweep(lens(8, 6e-3), std::nullopt, 0.0, 1e-3, 1, {}, lens_config()), InputError);
    }
}

TEST_SUITE("eyebox_sweep") {
    FocalStack targets(int n) {
        FocalStack st{n, n, 8e-6, {1e-3, 2.5e-3}, {520e-9}, {}};
        std::mt19937_64 gen{5};
        for (int k = 0; k < 2; ++k) {
            Image img{n, n};
            for (double& v : img.data) v = std::uniform_real_distribution<double>{0, 1}(gen);
            st.planes.push_back({img});
        }
        return st;
    }

    TEST_CASE("one cell is the center-pupil PSNR") {
        OptimizerConfig c;
        c.frames = 2;
        const auto b = initial_batch(c, 16, 16, {520e-9});
        const auto t = targets(16);
        const auto r = eyebox_sweep(b, t, 1, 2e-3, {}, c);
        REQUIRE(r.cells.size() == 1);
        CHECK(r.cells[0].pupil.center_x == 0.0);
        CHECK(r.cells[0].pupil.center_y == 0.0);
        const auto sim = simulate_reconstruction(b, PupilSpec{0.0, 0.0, 2e-3}, t.plane_depths, {}, c);
        const auto per_plane = stack_psnr(sim, t, c.orders);
        CHECK(r.cells[0].psnr == doctest::Approx((per_plane[0] + per_plane[1]) / 2.0));
        CHECK(r.min_psnr == r.max_psnr);
    }

    TEST_CASE("lattice spans the eye box and reruns are deterministic") {
        OptimizerConfig c;
        c.frames = 2;
        const auto b = initial_batch(c, 16, 16, {520e-9});
        const auto t = targets(16);
        const auto a = eyebox_sweep(b, t, 3, 2e-3, {}, c);
        const auto again = eyebox_sweep(b, t, 3, 2e-3, {}, c);
        const auto wide = eyebox_sweep(b, t, 3, 4e-3, {}, c);
        REQUIRE(a.cells.size() == 9);
        CHECK(a.cells[0].pupil.center_x == doctest::Approx(-2e-3));
        CHECK(a.cells[8].pupil.center_y == doctest::Approx(2e-3));
        bool changed = false;
        for (int i = 0; i < 9; ++i) {
            CHECK(a.cells[i].psnr == again.cells[i].psnr);
            changed = changed || a.cells[i].psnr != wide.cells[i].psnr;
        }
        CHECK(changed);
        CHECK(a.min_psnr <= a.mean_psnr);
        CHECK(a.mean_psnr <= a.max_psnr);
    }

    TEST_CASE("lower loss ranks with higher PSNR across checkpoints") {
        OptimizerConfig c;
        c.frames = 2;
        c.pupils_fixed = 1;
        c.pupils_random = 0;
        c.pupils_total = 1;
        const auto t = targets(24);
        std::vector<double> losses, psnrs;
        for (int iters : {1, 8, 30, 80, 200}) {
            c.iterations = iters;
            const auto r = optimize(c, t, {});
            std::vector<Aperture> fixed{PupilSpec{0.0, 0.0, 2e-3}};
            losses.push_back(forward_loss(r.batch, fixed, t, {}, c).loss);
            psnrs.push_back(eyebox_sweep(r.batch, t, 1, 2e-3, {}, c).mean_psnr);
        }
        for (std::size_t i = 0; i < losses.size(); ++i)
            for (std::size_t j = 0; j < losses.size(); ++j)
                if (losses[i] < losses[j]) CHECK(psnrs[i] > psnrs[j]);
    }
}
