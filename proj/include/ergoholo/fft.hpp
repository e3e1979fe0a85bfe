#pragma once

#include <memory>
#include <span>

#include "ergoholo/types.hpp"

namespace ergoholo {

enum class Planning { estimate, measure };

/// In-place 2D complex DFT on row-major width x height buffers, backed by
/// FFTW. Both directions are unnormalized. Plans are created once and may be
/// executed concurrently from several threads on distinct buffers.
///
/// The pruned variants skip the 1D column transforms of columns known to be
/// zero (inverse) or not needed (forward), which is the common case for
/// spectra behind a small pupil.
class Fft2d {
public:
    Fft2d(int width, int height, Planning planning = Planning::estimate);
    ~Fft2d();
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    /// Shared, lazily-planned instance for the given shape.
    static std::shared_ptr<const Fft2d> shared(int width, int height,
                                               Planning planning = Planning::estimate);

    int width() const { return width_; }
    int height() const { return height_; }

    /// out(k) = sum_n in(n) exp(-2 pi i k n / N)
    void forward(std::span<cplx> data) const;
    /// out(n) = sum_k in(k) exp(+2 pi i k n / N)
    void inverse(std::span<cplx> data) const;

    /// Inverse transform of a buffer whose only non-zero columns are `cols`
    /// (ascending, distinct).
    void inverse_sparse_cols(std::span<cplx> data, std::span<const int> cols) const;
    /// Forward transform where only `cols` of the result are needed; the
    /// other columns are left holding row-transformed intermediates.
    void forward_needed_cols(std::span<cplx> data, std::span<const int> cols) const;

    /// The two stages of the pruned transforms, for callers that interleave
    /// per-row work: 1D transforms of the listed columns, and of one row
    /// (`row` points at width() contiguous samples).
    void inverse_columns(std::span<cplx> data, std::span<const int> cols) const;
    void forward_columns(std::span<cplx> data, std::span<const int> cols) const;
    void inverse_row(cplx* row) const;
    /// Out-of-place row inverse; `in` is left unchanged.
    void inverse_row(const cplx* in, cplx* out) const;
    void forward_row(cplx* row) const;

private:
    struct Plans;
    void columns(std::span<cplx> data, std::span<const int> cols, bool inverse) const;
    int width_;
    int height_;
    std::unique_ptr<Plans> plans_;
};

} // namespace ergoholo
