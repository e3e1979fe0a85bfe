#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>

#include "ergoholo/wave_optics.hpp"

namespace ergoholo {

/// Memoizes coherent propagation kernels by (grid, wavelength, distance).
/// Entries are immutable once inserted and may be shared across threads.
///
/// The sidecar file layout is little-endian:
///   char[4] "EHKC", u32 version, u64 count, then per entry
///   i32 width, i32 height, i32 supersample, f64 pitch, f64 wavelength,
///   f64 distance, u8 band_limited, width*height x (f64 re, f64 im).
class KernelCache {
public:
    static constexpr std::uint32_t format_version = 1;

    KernelCache() = default;
    KernelCache(KernelCache&& other) noexcept : entries_{std::move(other.entries_)} {}

    std::shared_ptr<const PropagationKernel> get(const FrequencyGrid& grid, double wavelength,
                                                 double distance);
    std::size_t size() const;

    void save(const std::filesystem::path& path) const;
    static KernelCache load(const std::filesystem::path& path);

private:
    using Key = std::tuple<int, int, int, double, double, double>;
    static Key key_of(const FrequencyGrid& grid, double wavelength, double distance);

    mutable std::mutex mutex_;
    std::map<Key, std::shared_ptr<const PropagationKernel>> entries_;
};

} // namespace ergoholo
