#include "ergoholo/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <map>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace ergoholo {

namespace {

// FFTW planning and plan destruction are not thread-safe.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

} // namespace

// Columns transformed together by one strided plan execution.
constexpr int kColumnChunk = 16;

struct Fft2d::Plans {
    fftw_plan full_fwd = nullptr;
    fftw_plan full_inv = nullptr;
    fftw_plan rows_fwd = nullptr;
    fftw_plan rows_inv = nullptr;
    fftw_plan row_fwd = nullptr;
    fftw_plan row_inv = nullptr;
    fftw_plan row_inv_out = nullptr;
    fftw_plan chunk_fwd = nullptr;
    fftw_plan chunk_inv = nullptr;
    fftw_plan col_fwd = nullptr;
    fftw_plan col_inv = nullptr;

    std::vector<fftw_plan> all() const {
        return {full_fwd, full_inv,  rows_fwd,  rows_inv, row_fwd, row_inv,
                row_inv_out, chunk_fwd, chunk_inv, col_fwd, col_inv};
    }
};

Fft2d::Fft2d(int width, int height, Planning planning)
    : width_{width}, height_{height}, plans_{std::make_unique<Plans>()} {
    if (width <= 0 || height <= 0)
        throw std::invalid_argument("Fft2d: non-positive transform size");
    const unsigned flags =
        FFTW_UNALIGNED | (planning == Planning::measure ? FFTW_MEASURE : FFTW_ESTIMATE);

    std::vector<cplx> scratch(static_cast<std::size_t>(width) * height);
    std::vector<cplx> scratch_out(width);
    auto* buf = as_fftw(scratch.data());
    int row_n[1] = {width};
    int col_n[1] = {height};
    const int chunk = std::min(kColumnChunk, width);

    std::lock_guard lock{planner_mutex()};
    auto& p = *plans_;
    p.full_fwd = fftw_plan_dft_2d(height, width, buf, buf, FFTW_FORWARD, flags);
    p.full_inv = fftw_plan_dft_2d(height, width, buf, buf, FFTW_BACKWARD, flags);
    p.rows_fwd = fftw_plan_many_dft(1, row_n, height, buf, nullptr, 1, width, buf, nullptr, 1,
                                    width, FFTW_FORWARD, flags);
    p.rows_inv = fftw_plan_many_dft(1, row_n, height, buf, nullptr, 1, width, buf, nullptr, 1,
                                    width, FFTW_BACKWARD, flags);
    p.row_fwd = fftw_plan_dft_1d(width, buf, buf, FFTW_FORWARD, flags);
    p.row_inv = fftw_plan_dft_1d(width, buf, buf, FFTW_BACKWARD, flags);
    p.row_inv_out =
        fftw_plan_dft_1d(width, buf, as_fftw(scratch_out.data()), FFTW_BACKWARD, flags);
    p.chunk_fwd = fftw_plan_many_dft(1, col_n, chunk, buf, nullptr, width, 1, buf, nullptr, width,
                                     1, FFTW_FORWARD, flags);
    p.chunk_inv = fftw_plan_many_dft(1, col_n, chunk, buf, nullptr, width, 1, buf, nullptr, width,
                                     1, FFTW_BACKWARD, flags);
    p.col_fwd = fftw_plan_many_dft(1, col_n, 1, buf, nullptr, width, 1, buf, nullptr, width, 1,
                                   FFTW_FORWARD, flags);
    p.col_inv = fftw_plan_many_dft(1, col_n, 1, buf, nullptr, width, 1, buf, nullptr, width, 1,
                                   FFTW_BACKWARD, flags);
    for (fftw_plan plan : p.all())
        if (!plan) throw std::runtime_error("Fft2d: FFTW planning failed");
}

Fft2d::~Fft2d() {
    std::lock_guard lock{planner_mutex()};
    for (fftw_plan p : plans_->all())
        if (p) fftw_destroy_plan(p);
}

std::shared_ptr<const Fft2d> Fft2d::shared(int width, int height, Planning planning) {
    static std::mutex cache_mutex;
    static std::map<std::tuple<int, int, int>, std::shared_ptr<const Fft2d>> cache;
    std::lock_guard lock{cache_mutex};
    auto key = std::make_tuple(width, height, static_cast<int>(planning));
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto plan = std::make_shared<const Fft2d>(width, height, planning);
    cache.emplace(key, plan);
    return plan;
}

void Fft2d::forward(std::span<cplx> data) const {
    if (data.size() != static_cast<std::size_t>(width_) * height_)
        throw std::invalid_argument("Fft2d::forward: buffer size mismatch");
    fftw_execute_dft(plans_->full_fwd, as_fftw(data.data()), as_fftw(data.data()));
}

void Fft2d::inverse(std::span<cplx> data) const {
    if (data.size() != static_cast<std::size_t>(width_) * height_)
        throw std::invalid_argument("Fft2d::inverse: buffer size mismatch");
    fftw_execute_dft(plans_->full_inv, as_fftw(data.data()), as_fftw(data.data()));
}

void Fft2d::columns(std::span<cplx> data, std::span<const int> cols, bool inverse) const {
    // Runs of consecutive columns go through the chunked plan, the rest one at a time.
    const fftw_plan chunk = inverse ? plans_->chunk_inv : plans_->chunk_fwd;
    const fftw_plan single = inverse ? plans_->col_inv : plans_->col_fwd;
    const int step = std::min(kColumnChunk, width_);
    std::size_t i = 0;
    while (i < cols.size()) {
        if (cols[i] < 0 || cols[i] >= width_)
            throw std::invalid_argument("Fft2d: column index out of range");
        std::size_t run = 1;
        while (i + run < cols.size() && cols[i + run] == cols[i] + static_cast<int>(run)) ++run;
        std::size_t done = 0;
        for (; done + step <= run; done += step) {
            auto* col = as_fftw(data.data() + cols[i] + done);
            fftw_execute_dft(chunk, col, col);
        }
        for (; done < run; ++done) {
            auto* col = as_fftw(data.data() + cols[i] + done);
            fftw_execute_dft(single, col, col);
        }
        i += run;
    }
}

void Fft2d::inverse_columns(std::span<cplx> data, std::span<const int> cols) const {
    if (data.size() != static_cast<std::size_t>(width_) * height_)
        throw std::invalid_argument("Fft2d::inverse_columns: buffer size mismatch");
    columns(data, cols, true);
}

void Fft2d::forward_columns(std::span<cplx> data, std::span<const int> cols) const {
    if (data.size() != static_cast<std::size_t>(width_) * height_)
        throw std::invalid_argument("Fft2d::forward_columns: buffer size mismatch");
    columns(data, cols, false);
}

void Fft2d::inverse_row(cplx* row) const { fftw_execute_dft(plans_->row_inv, as_fftw(row), as_fftw(row)); }

void Fft2d::inverse_row(const cplx* in, cplx* out) const {
    // Complex out-of-place plans leave their input intact.
    fftw_execute_dft(plans_->row_inv_out, as_fftw(const_cast<cplx*>(in)), as_fftw(out));
}

void Fft2d::forward_row(cplx* row) const { fftw_execute_dft(plans_->row_fwd, as_fftw(row), as_fftw(row)); }

void Fft2d::inverse_sparse_cols(std::span<cplx> data, std::span<const int> cols) const {
    inverse_columns(data, cols);
    fftw_execute_dft(plans_->rows_inv, as_fftw(data.data()), as_fftw(data.data()));
}

void Fft2d::forward_needed_cols(std::span<cplx> data, std::span<const int> cols) const {
    if (data.size() != static_cast<std::size_t>(width_) * height_)
        throw std::invalid_argument("Fft2d::forward_needed_cols: buffer size mismatch");
    fftw_execute_dft(plans_->rows_fwd, as_fftw(data.data()), as_fftw(data.data()));
    columns(data, cols, false);
}

} // namespace ergoholo
