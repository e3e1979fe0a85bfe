#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "ergoholo/errors.hpp"
#include "ergoholo/evalsuite.hpp"
#include "ergoholo/optimizer.hpp"
#include "ergoholo/wave_optics.hpp"

using namespace ergoholo;

namespace {
// Observed on the first green run.
constexpr double kFlatWhiteRatio = 0.00591927;
} // namespace

namespace {

constexpr double pi = std::numbers::pi;

FocalStack random_targets(int n, std::vector<double> depths, double wl, std::uint64_t seed, double scale = 1.0) {
    FocalStack st;
    st.width = st.height = n;
    st.plane_depths = std::move(depths);
    st.wavelengths = {wl};
    std::mt19937_64 gen{seed};
    std::uniform_real_distribution<double> u{0.0, 1.0};
    for (std::size_t k = 0; k < st.plane_depths.size(); ++k) {
        Image img{n, n};
        for (double& v : img.data) v = scale * u(gen);
        st.planes.push_back({img});
    }
    return st;
}

HologramBatch random_batch(int n, int frames, double wl, std::uint64_t seed, double scale = 1.0) {
    OptimizerConfig c;
    c.frames = frames;
    c.seed = seed;
    auto b = initial_batch(c, n, n, {wl});
    b.channels[0].global_scale = scale;
    return b;
}

double mean_abs(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s / static_cast<double>(v.size());
}

} // namespace

TEST_SUITE("pupil sampling") {
    TEST_CASE("nine fixed pupils of 2 mm sit on a 3x3 grid at -2, 0, 2 mm") {
        OptimizerConfig c;
        const auto fixed = fixed_pupils(c);
        REQUIRE(fixed.size() == 9);
        for (int j = 0; j < 3; ++j)
            for (int i = 0; i < 3; ++i) {
                CHECK(fixed[j * 3 + i].center_x == doctest::Approx(-2e-3 + 2e-3 * i));
                CHECK(fixed[j * 3 + i].center_y == doctest::Approx(-2e-3 + 2e-3 * j));
                CHECK(fixed[j * 3 + i].radius == 2e-3);
            }
    }

    TEST_CASE("no random pupils means the fixed grid for any seed") {
        OptimizerConfig c;
        c.pupils_random = 0;
        c.pupils_total = 9;
        const auto a = sample_pupils(c, 3);
        c.seed = 999;
        const auto b = sample_pupils(c, 17);
        REQUIRE(a.size() == 9);
        REQUIRE(b.size() == 9);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i]->center_x == b[i]->center_x);
            CHECK(a[i]->center_y == b[i]->center_y);
        }
    }

    TEST_CASE("pupil lists are reproducible from seed and iteration") {
        OptimizerConfig c;
        const auto a = sample_pupils(c, 12);
        const auto b = sample_pupils(c, 12);
        const auto d = sample_pupils(c, 13);
        REQUIRE(a.size() == 25);
        bool differs = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i]->center_x == b[i]->center_x);
            CHECK(a[i]->radius == b[i]->radius);
            if (i < 9) CHECK(a[i]->center_x == d[i]->center_x);
            else differs = differs || a[i]->center_x != d[i]->center_x;
        }
        CHECK(differs);
    }

    TEST_CASE("every pupil disk stays inside the eye box") {
        OptimizerConfig c;
        c.eyebox = {-3e-3, -2e-3, 5e-3, 4e-3};
        c.base_radius = 1.5e-3;
        for (int it = 0; it < 200; ++it)
            for (const auto& p : sample_pupils(c, it)) {
                CHECK(p->center_x - p->radius >= c.eyebox.x_min - 1e-15);
                CHECK(p->center_x + p->radius <= c.eyebox.x_max + 1e-15);
                CHECK(p->center_y - p->radius >= c.eyebox.y_min - 1e-15);
                CHECK(p->center_y + p->radius <= c.eyebox.y_max + 1e-15);
            }
    }

    TEST_CASE("ablations fold into counts") {
        OptimizerConfig c;
        c.center_pupil_only = true;
        c.disable_time_multiplexing = true;
        c.disable_high_orders = true;
        const auto e = c.effective();
        CHECK(e.frames == 1);
        CHECK(e.orders == 1);
        const auto pupils = sample_pupils(c, 4);
        REQUIRE(pupils.size() == 1);
        CHECK(pupils[0]->center_x == 0.0);
        CHECK(pupils[0]->center_y == 0.0);
        c.disable_pupils = true;
        const auto none = sample_pupils(c, 0);
        REQUIRE(none.size() == 1);
        CHECK_FALSE(none[0].has_value());
    }

    TEST_CASE("inconsistent configs are rejected") {
        OptimizerConfig c;
        c.pupils_total = 10;
        CHECK_THROWS_AS(c.validate(), InputError);
        c = {};
        c.pupils_fixed = 8;
        c.pupils_total = 24;
        CHECK_THROWS_AS(c.validate(), InputError);
        c = {};
        c.orders = 2;
        CHECK_THROWS_AS(c.validate(), InputError);
    }
}

TEST_SUITE("pupil normalization") {
    TEST_CASE("linear in radius") {
        CHECK(pupil_normalization(2e-3, 2e-3) == 1.0);
        CHECK(pupil_normalization(4e-3, 2e-3) == 2.0);
    }

    TEST_CASE("flat spectrum through r and 2r has RMS amplitude ratio 2") {
        const int n = 128;
        ComplexField impulse{n, n, 8e-6, 520e-9};
        impulse.at(0, 0) = static_cast<double>(n * n);
        OpticsSettings s;
        s.orders = 1;
        s.sinc_envelope = false;
        auto rms = [&](double r) {
            return std::sqrt(reconstruct_plane(impulse, PupilSpec{0.0, 0.0, r}, 0.0, s).energy() / (n * n));
        };
        const double ratio = rms(1e-3) / rms(0.5e-3);
        CHECK(ratio == doctest::Approx(2.0).epsilon(0.02));
        CHECK(ratio / pupil_normalization(1e-3, 0.5e-3) == doctest::Approx(1.0).epsilon(0.02));
    }
}

TEST_SUITE("loss and gradient") {
    TEST_CASE("analytic gradient matches central differences") {
        const auto r = gradient_oracle_suite(5, 11, 1e-4);
        CHECK(r.value < 1e-4);
    }

    TEST_CASE("exact reconstruction gives zero loss and zero gradient") {
        OptimizerConfig c;
        c.orders = 1;
        c.frames = 2;
        const int n = 16;
        const auto batch = random_batch(n, 2, 520e-9, 4, 0.7);
        const std::vector<Aperture> pupils{PupilSpec{0.3e-3, -0.2e-3, 1.2e-3}};
        const std::vector<double> depths{1e-3, 2.5e-3};
        const auto sim = simulate_reconstruction(batch, pupils[0], depths, {}, c);
        FocalStack targets{n, n, 8e-6, depths, {520e-9}, {}};
        for (auto& plane : sim.planes) {
            Image t = plane[0];
            for (double& v : t.data) v *= v;
            targets.planes.push_back({t});
        }
        const auto g = gradient(batch, pupils, targets, {}, c);
        CHECK(g.loss < 1e-28);
        for (const auto& f : g.phase[0])
            for (double v : f) CHECK(std::abs(v) < 1e-14);
        CHECK(std::abs(g.global_scale[0]) < 1e-14);
    }

    TEST_CASE("scale gradient vanishes at the closed-form optimum and the optimum absorbs exposure") {
        OptimizerConfig c;
        c.frames = 2;
        const int n = 16;
        auto batch = random_batch(n, 2, 520e-9, 5, 1.0);
        const std::vector<Aperture> pupils{PupilSpec{0.0, 0.0, 2e-3}, PupilSpec{1e-3, 1e-3, 1.5e-3}};
        auto targets = random_targets(n, {1e-3, 3e-3}, 520e-9, 6);
        const auto ps = pupil_scales(pupils, c);

        // With unit scale the eye amplitude is a1; at scale s it is s * a1.
        auto fit = [&](const FocalStack& t) {
            auto unit = batch;
            unit.channels[0].global_scale = 1.0;
            double num = 0.0, den = 0.0;
            for (std::size_t q = 0; q < pupils.size(); ++q) {
                const auto sim = simulate_reconstruction(unit, pupils[q], t.plane_depths, {}, c);
                for (std::size_t k = 0; k < t.plane_count(); ++k) {
                    const auto target = upsample_nearest(t.planes[k][0], c.orders);
                    for (std::size_t i = 0; i < target.data.size(); ++i) {
                        const double a1 = sim.planes[k][0].data[i];
                        num += a1 * std::sqrt(target.data[i]);
                        den += a1 * a1;
                    }
                }
            }
            return num / den;
        };
        const double s_star = fit(targets);
        batch.channels[0].global_scale = s_star;
        const auto at_opt = gradient(batch, pupils, targets, {}, c);
        batch.channels[0].global_scale = 1.3 * s_star;
        const auto off_opt = gradient(batch, pupils, targets, {}, c);
        CHECK(std::abs(at_opt.global_scale[0]) < 1e-9 * std::abs(off_opt.global_scale[0]) + 1e-15);

        // Doubling target amplitudes: the refit scale doubles and the loss,
        // relative to target energy, returns to its previous value.
        auto doubled = targets;
        for (auto& p : doubled.planes)
            for (double& v : p[0].data) v *= 4.0;
        batch.channels[0].global_scale = s_star;
        const double before = forward_loss(batch, pupils, targets, {}, c).loss;
        const double stale = forward_loss(batch, pupils, doubled, {}, c).loss;
        const double s2 = fit(doubled);
        CHECK(s2 == doctest::Approx(2.0 * s_star).epsilon(1e-12));
        batch.channels[0].global_scale = s2;
        const double after = forward_loss(batch, pupils, doubled, {}, c).loss;
        CHECK(stale > after);
        CHECK(after / 4.0 == doctest::Approx(before).epsilon(1e-10));
    }

    TEST_CASE("L1 and phase-mode losses evaluate and differ from the default") {
        OptimizerConfig c;
        c.frames = 1;
        const auto batch = random_batch(8, 1, 520e-9, 2, 1.0);
        const auto targets = random_targets(8, {2e-3}, 520e-9, 3);
        const std::vector<Aperture> pupils{std::nullopt};
        const double l2 = forward_loss(batch, pupils, targets, {}, c).loss;
        c.loss_norm = LossNorm::l1;
        const double l1 = forward_loss(batch, pupils, targets, {}, c).loss;
        c.loss_norm = LossNorm::l2;
        c.scale_mode = ScaleMode::phase;
        const double ph = forward_loss(batch, pupils, targets, {}, c).loss;
        CHECK(std::isfinite(l1));
        CHECK(l1 != l2);
        // At unit scale and uniform laser both modes see exp(i phi).
        CHECK(ph == doctest::Approx(l2).epsilon(1e-12));
    }
}

TEST_SUITE("optimize") {
    TEST_CASE("zero iterations return the initialization") {
        OptimizerConfig c;
        c.iterations = 0;
        c.frames = 2;
        const auto targets = random_targets(16, {1e-3, 2e-3}, 520e-9, 1);
        const auto init = random_batch(16, 2, 520e-9, 77, 0.8);
        const auto r = optimize(c, targets, {}, init);
        CHECK(r.history.empty());
        CHECK(r.batch.channels[0].global_scale == 0.8);
        for (int t = 0; t < 2; ++t) CHECK(r.batch.channels[0].frames[t].phase == init.channels[0].frames[t].phase);
        const auto fresh = optimize(c, targets, {});
        CHECK(fresh.batch.channels[0].frames[0].phase == initial_batch(c, 16, 16, {520e-9}).channels[0].frames[0].phase);
    }

    TEST_CASE("flat white 64x64 target converges below 10% of the initial loss") {
        OptimizerConfig c;
        c.frames = 1;
        c.orders = 1;
        c.disable_pupils = true;
        c.iterations = 200;
        FocalStack st{64, 64, 8e-6, {2e-3}, {520e-9}, {{Image{64, 64, 1.0}}}};
        const auto r = optimize(c, st, {});
        REQUIRE(r.history.size() == 200);
        const double ratio = r.history.back().best_loss / r.history.front().loss;
        MESSAGE("flat-white loss ratio " << ratio);
        CHECK(ratio < 0.1);
        // Locked regression value for this seed.
        CHECK(ratio == doctest::Approx(kFlatWhiteRatio).epsilon(0.05));
    }

    TEST_CASE("best-so-far loss never increases") {
        OptimizerConfig c;
        c.frames = 2;
        c.iterations = 40;
        c.pupils_fixed = 1;
        c.pupils_random = 2;
        c.pupils_total = 3;
        const auto targets = random_targets(16, {0.5e-3, 1.5e-3, 3e-3}, 520e-9, 8);
        const auto r = optimize(c, targets, {});
        for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i].best_loss <= r.history[i - 1].best_loss);
        CHECK(r.history[r.best_iteration].loss == r.history.back().best_loss);
    }

    TEST_CASE("time multiplexing lowers the loss on a speckled target") {
        OptimizerConfig c;
        c.iterations = 60;
        c.pupils_fixed = 1;
        c.pupils_random = 0;
        c.pupils_total = 1;
        const auto targets = random_targets(24, {1e-3, 3e-3}, 520e-9, 12);
        c.frames = 1;
        const auto one = optimize(c, targets, {});
        c.frames = 5;
        const auto five = optimize(c, targets, {});
        CHECK(five.history.back().best_loss <= one.history.back().best_loss);
    }

    TEST_CASE("huge targets overflow and report the last good iterate") {
        OptimizerConfig c;
        c.frames = 1;
        c.iterations = 5;
        c.disable_pupils = true;
        const auto targets = random_targets(16, {1e-3}, 520e-9, 2, 1e306);
        try {
            optimize(c, targets, {});
            FAIL("expected divergence");
        } catch (const OptimizationDiverged& e) {
            CHECK(e.partial().batch.frame_count() == 1);
            CHECK(e.partial().history.empty());
        }
    }
}

TEST_SUITE("laser profile") {
    TEST_CASE("absent file gives a uniform map") {
        const auto img = load_laser_profile({}, 7, 5);
        CHECK(img.width == 7);
        for (double v : img.data) CHECK(v == 1.0);
    }

    TEST_CASE("Gaussian beam is normalized to unit mean") {
        Image g{32, 24};
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 32; ++x) g.at(x, y) = 3.0 * std::exp(-((x - 15.5) * (x - 15.5) + (y - 11.5) * (y - 11.5)) / 200.0);
        const auto n = normalize_laser_profile(g);
        CHECK(n.sum() / n.size() == doctest::Approx(1.0).epsilon(1e-14));
        Image bad{2, 2, 1.0};
        bad.data[1] = 0.0;
        CHECK_THROWS_AS(normalize_laser_profile(bad), InputError);
    }

    TEST_CASE("flat phase reconstruction carries the profile energy") {
        const int n = 32;
        Image g{n, n};
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) g.at(x, y) = 0.2 + std::exp(-((x - 16.0) * (x - 16.0) + (y - 16.0) * (y - 16.0)) / 80.0);
        g = normalize_laser_profile(g);
        double g2 = 0.0;
        for (double v : g.data) g2 += v * v;
        OptimizerConfig c;
        c.orders = 1;
        c.sinc_envelope = false;
        c.frames = 1;
        HologramBatch flat{{HologramChannel{520e-9, {PhasePattern{n, n, 8e-6, 0.0}}, 1.0}}};
        auto energy = [&](const Image& laser) {
            const auto st = simulate_reconstruction(flat, std::nullopt, {2e-3}, {laser, {}}, c);
            double e = 0.0;
            for (double v : st.planes[0][0].data) e += v * v;
            return e;
        };
        CHECK(energy(g) / energy(Image{}) == doctest::Approx(g2 / (n * n)).epsilon(1e-12));
    }
}

TEST_SUITE("phase quantization") {
    TEST_CASE("256 levels map v to 2 pi v / 256") {
        CHECK(dequantize_phase(0) == 0.0);
        CHECK(dequantize_phase(128) == doctest::Approx(pi));
        CHECK(quantize_phase(2.0 * pi) == 0);
        CHECK(quantize_phase(-pi / 128.0) == 255);
    }

    TEST_CASE("round trip error stays below one level") {
        std::mt19937_64 gen{1};
        std::uniform_real_distribution<double> u{-20.0, 20.0};
        for (int i = 0; i < 10000; ++i) {
            const double p = u(gen);
            const double d = std::remainder(dequantize_phase(quantize_phase(p)) - p, 2.0 * pi);
            CHECK(std::abs(d) <= pi / 256.0 + 1e-12);
        }
    }
}
