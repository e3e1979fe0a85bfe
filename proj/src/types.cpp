#include "ergoholo/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ergoholo/errors.hpp"

namespace ergoholo {

double Image::sum() const {
    double s = 0.0;
    for (double v : data) s += v;
    return s;
}

double Image::max() const {
    return data.empty() ? 0.0 : *std::max_element(data.begin(), data.end());
}

ComplexField::ComplexField(int w, int h, double pitch_m, double wavelength_m, cplx fill)
    : width{w}, height{h}, pitch{pitch_m}, wavelength{wavelength_m},
      data(static_cast<std::size_t>(w) * h, fill) {}

void ComplexField::validate() const {
    if (width <= 0 || height <= 0) throw InputError("field has non-positive dimensions");
    if (!(pitch > 0.0)) throw InputError("field pitch must be positive");
    if (!(wavelength > 0.0)) throw InputError("field wavelength must be positive");
    if (data.size() != static_cast<std::size_t>(width) * height)
        throw InputError("field sample count " + std::to_string(data.size()) +
                         " does not match " + std::to_string(width) + "x" +
                         std::to_string(height));
}

double ComplexField::energy() const {
    double e = 0.0;
    for (const auto& v : data) e += std::norm(v);
    return e;
}

} // namespace ergoholo
