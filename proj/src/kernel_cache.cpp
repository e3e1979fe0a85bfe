#include "ergoholo/kernel_cache.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "ergoholo/errors.hpp"

namespace ergoholo {

namespace {

constexpr std::array<char, 4> magic = {'E', 'H', 'K', 'C'};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_value(std::istream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw InputError("kernel cache " + path.string() + ": truncated file");
    return v;
}

} // namespace

KernelCache::Key KernelCache::key_of(const FrequencyGrid& grid, double wavelength, double distance) {
    return {grid.width, grid.height, grid.supersample, grid.pitch, wavelength, distance};
}

std::shared_ptr<const PropagationKernel> KernelCache::get(const FrequencyGrid& grid,
                                                          double wavelength, double distance) {
    const auto key = key_of(grid, wavelength, distance);
    {
        std::lock_guard lock{mutex_};
        if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    }
    auto kernel = std::make_shared<const PropagationKernel>(coherent_kernel(grid, wavelength, distance));
    std::lock_guard lock{mutex_};
    return entries_.emplace(key, std::move(kernel)).first->second;
}

std::size_t KernelCache::size() const {
    std::lock_guard lock{mutex_};
    return entries_.size();
}

void KernelCache::save(const std::filesystem::path& path) const {
    std::ofstream os{path, std::ios::binary};
    if (!os) throw InputError("cannot write kernel cache " + path.string());
    std::lock_guard lock{mutex_};
    os.write(magic.data(), magic.size());
    put<std::uint32_t>(os, format_version);
    put<std::uint64_t>(os, entries_.size());
    for (const auto& [key, k] : entries_) {
        put<std::int32_t>(os, k->grid.width);
        put<std::int32_t>(os, k->grid.height);
        put<std::int32_t>(os, k->grid.supersample);
        put<double>(os, k->grid.pitch);
        put<double>(os, k->wavelength);
        put<double>(os, k->distance);
        put<std::uint8_t>(os, k->band_limited ? 1 : 0);
        for (const auto& v : k->values) {
            put<double>(os, v.real());
            put<double>(os, v.imag());
        }
    }
}

KernelCache KernelCache::load(const std::filesystem::path& path) {
    std::ifstream is{path, std::ios::binary};
    if (!is) throw InputError("cannot open kernel cache " + path.string());
    std::array<char, 4> tag{};
    if (!is.read(tag.data(), tag.size()) || tag != magic)
        throw InputError("kernel cache " + path.string() + ": bad magic");
    const auto version = get_value<std::uint32_t>(is, path);
    if (version != format_version)
        throw InputError("kernel cache " + path.string() + ": unsupported version " +
                         std::to_string(version));
    const auto count = get_value<std::uint64_t>(is, path);

    KernelCache cache;
    for (std::uint64_t e = 0; e < count; ++e) {
        PropagationKernel k;
        k.grid.width = get_value<std::int32_t>(is, path);
        k.grid.height = get_value<std::int32_t>(is, path);
        k.grid.supersample = get_value<std::int32_t>(is, path);
        k.grid.pitch = get_value<double>(is, path);
        k.wavelength = get_value<double>(is, path);
        k.distance = get_value<double>(is, path);
        k.band_limited = get_value<std::uint8_t>(is, path) != 0;
        if (k.grid.width <= 0 || k.grid.height <= 0)
            throw InputError("kernel cache " + path.string() + ": bad grid shape");
        k.values.resize(k.grid.size());
        for (auto& v : k.values) {
            const double re = get_value<double>(is, path);
            const double im = get_value<double>(is, path);
            v = {re, im};
        }
        auto key = key_of(k.grid, k.wavelength, k.distance);
        cache.entries_.emplace(key, std::make_shared<const PropagationKernel>(std::move(k)));
    }
    return cache;
}

} // namespace ergoholo
