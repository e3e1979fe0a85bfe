#include "ergoholo/reconstruction_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>

#include "ergoholo/errors.hpp"
#include "ergoholo/kernel_cache.hpp"
#include "ergoholo/parallel.hpp"
#include "ergoholo/wave_optics.hpp"

namespace ergoholo {

namespace {

int positive_mod(int a, int n) {
    const int r = a % n;
    return r < 0 ? r + n : r;
}

/// Zeroes the listed columns of a row-major buffer.
void zero_columns(std::vector<cplx>& buf, int width, std::span<const int> cols) {
    const std::size_t rows = buf.size() / width;
    std::size_t i = 0;
    while (i < cols.size()) {
        std::size_t run = 1;
        while (i + run < cols.size() && cols[i + run] == cols[i] + static_cast<int>(run)) ++run;
        for (std::size_t y = 0; y < rows; ++y) {
            cplx* p = buf.data() + y * width + cols[i];
            std::fill(p, p + run, cplx{});
        }
        i += run;
    }
}

int min_signed(int n) { return -(n / 2); }
int max_signed(int n) { return (n - 1) / 2; }

} // namespace

/// Per-worker buffers. `spectrum` holds zeros outside `dirty` columns.
struct ReconstructionModel::Scratch {
    std::vector<std::vector<cplx>> spectrum;
    std::vector<std::vector<cplx>> u;
    std::vector<int> dirty;
    std::vector<double> work;
    std::vector<std::vector<cplx>> grad_spectra;
    double loss = 0.0;
};

struct ReconstructionModel::ScratchPool {
    std::mutex mutex;
    std::vector<Scratch> workers;
};

ReconstructionModel::ReconstructionModel(ReconstructionModel&&) noexcept = default;
ReconstructionModel& ReconstructionModel::operator=(ReconstructionModel&&) noexcept = default;
ReconstructionModel::~ReconstructionModel() = default;

ReconstructionModel::ReconstructionModel(int width, int height, std::vector<double> plane_depths,
                                         const Settings& settings, KernelCache* cache)
    : width_{width}, height_{height}, plane_depths_{std::move(plane_depths)}, settings_{settings},
      pool_{std::make_unique<ScratchPool>()} {
    if (width <= 0 || height <= 0) throw InputError("reconstruction model: empty SLM");
    if (settings.orders < 1 || settings.orders % 2 == 0)
        throw InputError("reconstruction model: orders must be a positive odd integer");
    if (!(settings.pitch > 0.0) || !(settings.wavelength > 0.0) ||
        !(settings.eyepiece_focal_length > 0.0))
        throw InputError("reconstruction model: pitch, wavelength and focal length must be positive");
    if (plane_depths_.empty()) throw InputError("reconstruction model: no planes");

    grid_ = supersampled_grid(width, height, settings.pitch, settings.orders);
    base_fft_ = Fft2d::shared(width, height, settings.planning);
    grid_fft_ = Fft2d::shared(grid_.width, grid_.height, settings.planning);

    // The 1 / (W H) of the inverse transform is folded into the weights.
    const double norm = 1.0 / (static_cast<double>(width) * height);
    auto envelope = settings.sinc_envelope ? sinc_envelope(grid_, settings.pitch)
                                           : std::vector<double>(grid_.size(), 1.0);
    for (double& e : envelope) e *= norm;
    for (double d : plane_depths_) {
        std::vector<cplx> w;
        if (cache) {
            w = cache->get(grid_, settings.wavelength, d)->values;
        } else {
            w = coherent_kernel(grid_, settings.wavelength, d).values;
        }
        for (std::size_t n = 0; n < w.size(); ++n) w[n] *= envelope[n];
        weights_.push_back(std::move(w));
    }

    base_col_.resize(grid_.width);
    base_row_.resize(grid_.height);
    for (int i = 0; i < grid_.width; ++i)
        base_col_[i] = positive_mod(FrequencyGrid::signed_index(i, grid_.width), width);
    for (int j = 0; j < grid_.height; ++j)
        base_row_[j] = positive_mod(FrequencyGrid::signed_index(j, grid_.height), height);
    for (int i = 0; i < grid_.width; ++i) slm_col_.push_back(slm_index(i, width));
    for (int j = 0; j < grid_.height; ++j) slm_row_.push_back(slm_index(j, height));
}

int ReconstructionModel::slm_index(int sample, int slm_extent) const {
    const int o = settings_.orders;
    return ((sample + (o - 1) / 2) / o) % slm_extent;
}

PupilFootprint ReconstructionModel::footprint(const Aperture& aperture) const {
    PupilFootprint fp;
    const int mw = grid_.width;
    const int mh = grid_.height;
    if (!aperture) {
        for (int j = 0; j < mh; ++j) fp.spans.push_back({j, min_signed(mw), max_signed(mw)});
        for (int i = 0; i < mw; ++i) fp.cols.push_back(i);
        return fp;
    }
    // Same arithmetic as pupil_mask so both produce identical sample sets.
    const double scale = 1.0 / (settings_.wavelength * settings_.eyepiece_focal_length);
    const double cx = aperture->center_x * scale;
    const double cy = aperture->center_y * scale;
    const double r = aperture->radius * scale;
    const double r2 = r * r;
    const double dfx = grid_.dfx();
    const double dfy = grid_.dfy();

    const int s_lo = std::max(min_signed(mh), static_cast<int>(std::floor((cy - r) / dfy)) - 1);
    const int s_hi = std::min(max_signed(mh), static_cast<int>(std::ceil((cy + r) / dfy)) + 1);
    for (int s = s_lo; s <= s_hi; ++s) {
        const int j = s < 0 ? s + mh : s;
        const double dy = grid_.fy(j) - cy;
        const double rem = r2 - dy * dy;
        if (rem <= 0.0) continue;
        const double half = std::sqrt(rem);
        int c_lo = std::max(min_signed(mw), static_cast<int>(std::floor((cx - half) / dfx)) - 1);
        int c_hi = std::min(max_signed(mw), static_cast<int>(std::ceil((cx + half) / dfx)) + 1);
        auto inside = [&](int c) {
            const int i = c < 0 ? c + mw : c;
            const double dx = grid_.fx(i) - cx;
            return dx * dx + dy * dy < r2;
        };
        while (c_lo <= c_hi && !inside(c_lo)) ++c_lo;
        while (c_hi >= c_lo && !inside(c_hi)) --c_hi;
        if (c_lo > c_hi) continue;
        fp.spans.push_back({j, c_lo, c_hi});
    }
    std::vector<std::uint8_t> used(mw, 0);
    for (const auto& span : fp.spans)
        for (int c = span.col_lo; c <= span.col_hi; ++c) used[c < 0 ? c + mw : c] = 1;
    for (int i = 0; i < mw; ++i)
        if (used[i]) fp.cols.push_back(i);
    return fp;
}

std::vector<cplx> ReconstructionModel::slm_field(const PhasePattern& frame, double global_scale,
                                                 const Image& laser) const {
    if (frame.width != width_ || frame.height != height_)
        throw InputError("reconstruction model: frame is " + std::to_string(frame.width) + "x" +
                         std::to_string(frame.height) + ", model expects " +
                         std::to_string(width_) + "x" + std::to_string(height_));
    const bool has_laser = !laser.data.empty();
    if (has_laser && (laser.width != width_ || laser.height != height_))
        throw InputError("reconstruction model: laser profile does not match the SLM");
    std::vector<cplx> g(frame.size());
    for (std::size_t n = 0; n < g.size(); ++n) {
        const double s = has_laser ? laser.data[n] : 1.0;
        if (settings_.scale_mode == ScaleMode::amplitude)
            g[n] = std::polar(global_scale * s, frame.phase[n]);
        else
            g[n] = std::polar(1.0, global_scale * s * frame.phase[n]);
    }
    return g;
}

void ReconstructionModel::fill_spectrum(std::vector<cplx>& buf, const std::vector<cplx>& base,
                                        const std::vector<cplx>& weight,
                                        const PupilFootprint& fp) const {
    std::fill(buf.begin(), buf.end(), cplx{});
    write_spans(buf, base, weight, fp);
}

void ReconstructionModel::write_spans(std::vector<cplx>& buf, const std::vector<cplx>& base,
                                      const std::vector<cplx>& weight,
                                      const PupilFootprint& fp) const {
    const int mw = grid_.width;
    for (const auto& span : fp.spans) {
        const std::size_t row_off = static_cast<std::size_t>(span.row) * mw;
        const std::size_t base_off = static_cast<std::size_t>(base_row_[span.row]) * width_;
        for (int c = span.col_lo; c <= span.col_hi; ++c) {
            const int i = c < 0 ? c + mw : c;
            buf[row_off + i] = base[base_off + base_col_[i]] * weight[row_off + i];
        }
    }
}

ReconstructionModel::Evaluation ReconstructionModel::evaluate(
    std::span<const PhasePattern> frames, double global_scale, const Image& laser,
    std::span<const Aperture> pupils, std::span<const double> pupil_scales,
    std::span<const Image> targets, bool want_gradient) const {
    const int frame_count = static_cast<int>(frames.size());
    const int plane_count = static_cast<int>(plane_depths_.size());
    const int pupil_count = static_cast<int>(pupils.size());
    if (frame_count < 1) throw InputError("evaluate: no frames");
    if (pupil_count < 1) throw InputError("evaluate: no pupils");
    if (static_cast<int>(pupil_scales.size()) != pupil_count)
        throw InputError("evaluate: one pupil scale per pupil required");
    if (static_cast<int>(targets.size()) != plane_count)
        throw InputError("evaluate: expected " + std::to_string(plane_count) + " target planes, got " +
                         std::to_string(targets.size()));
    for (const auto& t : targets)
        if (t.width != width_ || t.height != height_)
            throw InputError("evaluate: target plane does not match the SLM grid");

    std::vector<std::vector<cplx>> fields(frame_count);
    std::vector<std::vector<cplx>> spectra(frame_count);
    for (int t = 0; t < frame_count; ++t) {
        fields[t] = slm_field(frames[t], global_scale, laser);
        spectra[t] = fields[t];
        base_fft_->forward(spectra[t]);
    }
    std::vector<PupilFootprint> footprints;
    for (const auto& p : pupils) footprints.push_back(footprint(p));

    const int pairs = plane_count * pupil_count;
    const int workers = std::clamp(settings_.threads, 1, pairs);
    const std::size_t grid_size = grid_.size();
    const std::size_t slm_size = static_cast<std::size_t>(width_) * height_;
    const double inv_t = 1.0 / frame_count;
    const double pixel_weight = 1.0 / static_cast<double>(grid_size);

    std::lock_guard lock{pool_->mutex};
    auto& scratch = pool_->workers;
    scratch.resize(workers);
    for (auto& s : scratch) {
        if (s.spectrum.size() != static_cast<std::size_t>(frame_count)) {
            s.spectrum.assign(frame_count, std::vector<cplx>(grid_size));
            s.u.assign(frame_count, std::vector<cplx>(grid_size));
            s.dirty.clear();
        }
        s.work.resize(grid_.width);
        s.loss = 0.0;
        if (want_gradient) s.grad_spectra.assign(frame_count, std::vector<cplx>(slm_size));
    }

    Evaluation ev;
    ev.pair_loss.assign(plane_count, std::vector<double>(pupil_count, 0.0));

    const int mw = grid_.width;
    const int mh = grid_.height;
    parallel_for(pairs, workers, [&](int pair, int worker) {
        const int k = pair / pupil_count;
        const int q = pair % pupil_count;
        Scratch& s = scratch[worker];
        const auto& fp = footprints[q];
        const auto& weight = weights_[k];

        for (int t = 0; t < frame_count; ++t) {
            auto& spec = s.spectrum[t];
            zero_columns(spec, mw, s.dirty);
            write_spans(spec, spectra[t], weight, fp);
            grid_fft_->inverse_columns(spec, fp.cols);
        }
        s.dirty = fp.cols;

        // Row by row, so each row stays in cache: finish the inverse
        // transforms, average the intensity over frames, take the residuals
        // and, for a gradient, turn u into dL/du and start its adjoint
        // transform.
        const double sigma = pupil_scales[q];
        const Image& target = targets[k];
        const double inv_sigma = 1.0 / sigma;
        const double grad_scale = pixel_weight / pairs * inv_t / (2.0 * sigma);
        double* w = s.work.data();
        double acc = 0.0;
        for (int my = 0; my < mh; ++my) {
            const std::size_t off = static_cast<std::size_t>(my) * mw;
            for (int t = 0; t < frame_count; ++t) {
                cplx* row = s.u[t].data() + off;
                grid_fft_->inverse_row(s.spectrum[t].data() + off, row);
                if (t == 0)
                    for (int mx = 0; mx < mw; ++mx) w[mx] = std::norm(row[mx]) * inv_t;
                else
                    for (int mx = 0; mx < mw; ++mx) w[mx] += std::norm(row[mx]) * inv_t;
            }
            const double* trow = target.data.data() + static_cast<std::size_t>(slm_row_[my]) * width_;
            for (int mx = 0; mx < mw; ++mx) {
                const double intensity = w[mx];
                const bool live = intensity > settings_.intensity_floor;
                const double root = std::sqrt(live ? intensity : settings_.intensity_floor);
                const double r = root * inv_sigma - trow[slm_col_[mx]];
                double dl_damp;
                if (settings_.norm == LossNorm::l2) {
                    acc += r * r;
                    dl_damp = 2.0 * r;
                } else {
                    acc += std::abs(r);
                    dl_damp = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                }
                w[mx] = live ? dl_damp * grad_scale / root : 0.0;
            }
            if (!want_gradient) continue;
            for (int t = 0; t < frame_count; ++t) {
                cplx* row = s.u[t].data() + off;
                for (int mx = 0; mx < mw; ++mx) row[mx] *= w[mx];
                grid_fft_->forward_row(row);
            }
        }
        const double pair_loss = acc * pixel_weight;
        ev.pair_loss[k][q] = pair_loss;
        s.loss += pair_loss / pairs;

        if (!want_gradient) return;
        for (int t = 0; t < frame_count; ++t) {
            auto& u = s.u[t];
            grid_fft_->forward_columns(u, fp.cols);
            auto& gb = s.grad_spectra[t];
            for (const auto& span : fp.spans) {
                const std::size_t row_off = static_cast<std::size_t>(span.row) * mw;
                const std::size_t base_off = static_cast<std::size_t>(base_row_[span.row]) * width_;
                for (int c = span.col_lo; c <= span.col_hi; ++c) {
                    const int i = c < 0 ? c + mw : c;
                    gb[base_off + base_col_[i]] += std::conj(weight[row_off + i]) * u[row_off + i];
                }
            }
        }
    });

    for (const auto& s : scratch) ev.loss += s.loss;
    if (!std::isfinite(ev.loss)) throw NumericalError("evaluate: loss is not finite");
    if (!want_gradient) return ev;

    const bool has_laser = !laser.data.empty();
    ev.phase_grad.assign(frame_count, std::vector<double>(slm_size, 0.0));
    for (int t = 0; t < frame_count; ++t) {
        std::vector<cplx> g(slm_size);
        for (const auto& s : scratch)
            for (std::size_t n = 0; n < slm_size; ++n) g[n] += s.grad_spectra[t][n];
        // Adjoint of the unnormalized forward DFT.
        base_fft_->inverse(g);
        const auto& field = fields[t];
        const auto& phase = frames[t].phase;
        auto& dphi = ev.phase_grad[t];
        for (std::size_t n = 0; n < slm_size; ++n) {
            const double s = has_laser ? laser.data[n] : 1.0;
            const double im = std::imag(g[n] * std::conj(field[n]));
            if (settings_.scale_mode == ScaleMode::amplitude) {
                dphi[n] = 2.0 * im;
                ev.scale_grad += 2.0 * std::real(std::conj(g[n]) * std::polar(s, phase[n]));
            } else {
                dphi[n] = 2.0 * global_scale * s * im;
                ev.scale_grad += 2.0 * s * phase[n] * im;
            }
        }
    }
    return ev;
}

std::vector<Image> ReconstructionModel::amplitudes(std::span<const PhasePattern> frames,
                                                   double global_scale, const Image& laser,
                                                   const Aperture& aperture,
                                                   double pupil_scale) const {
    if (frames.empty()) throw InputError("amplitudes: no frames");
    const auto fp = footprint(aperture);
    const std::size_t grid_size = grid_.size();
    const double inv_t = 1.0 / static_cast<double>(frames.size());

    std::vector<std::vector<cplx>> spectra;
    for (const auto& f : frames) {
        auto s = slm_field(f, global_scale, laser);
        base_fft_->forward(s);
        spectra.push_back(std::move(s));
    }
    std::vector<Image> out;
    std::vector<cplx> buf(grid_size);
    for (std::size_t k = 0; k < plane_depths_.size(); ++k) {
        Image img{grid_.width, grid_.height, 0.0};
        for (const auto& spec : spectra) {
            fill_spectrum(buf, spec, weights_[k], fp);
            grid_fft_->inverse_sparse_cols(buf, fp.cols);
            for (std::size_t n = 0; n < grid_size; ++n) img.data[n] += std::norm(buf[n]) * inv_t;
        }
        for (double& v : img.data)
            v = std::sqrt(std::max(v, settings_.intensity_floor)) / pupil_scale;
        out.push_back(std::move(img));
    }
    return out;
}

} // namespace ergoholo
