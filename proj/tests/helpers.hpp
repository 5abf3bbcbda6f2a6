#pragma once

#include <cstdint>

#include "sreg/detail/rng.hpp"
#include "sreg/grid.hpp"

// Shared builders for randomized test instances.

namespace sreg_test {

inline sreg::ImageVolume random_image(const sreg::GridShape& shape, uint64_t seed) {
    sreg::detail::Rng rng(seed);
    sreg::ImageVolume img(shape);
    for (double& v : img.values)
        v = rng.uniform();
    return img;
}

inline sreg::DisplacementField random_field(const sreg::GridShape& shape, uint64_t seed,
                                            double amplitude) {
    sreg::detail::Rng rng(seed);
    sreg::DisplacementField f(shape);
    for (double& v : f.components)
        v = rng.uniform(-amplitude, amplitude);
    return f;
}

// Scalar-by-scalar reference interpolation: same clamped nested-lerp
// definition as the library, written independently against one voxel at a
// time.
inline double oracle_bilinear(const sreg::ImageVolume& img, double x0, double x1) {
    const int64_t d0 = img.shape.extent(0), d1 = img.shape.extent(1);
    auto clamp = [](double x, int64_t d) {
        if (x < 0.0)
            return 0.0;
        if (x > static_cast<double>(d - 1))
            return static_cast<double>(d - 1);
        return x;
    };
    x0 = clamp(x0, d0);
    x1 = clamp(x1, d1);
    int64_t i0 = static_cast<int64_t>(x0);
    int64_t i1 = static_cast<int64_t>(x1);
    if (i0 > d0 - 2)
        i0 = d0 - 2;
    if (i1 > d1 - 2)
        i1 = d1 - 2;
    const double f0 = x0 - static_cast<double>(i0);
    const double f1 = x1 - static_cast<double>(i1);
    auto at = [&](int64_t a, int64_t b) { return img.values[static_cast<size_t>(a * d1 + b)]; };
    const double top = at(i0, i1) * (1.0 - f1) + at(i0, i1 + 1) * f1;
    const double bot = at(i0 + 1, i1) * (1.0 - f1) + at(i0 + 1, i1 + 1) * f1;
    return top * (1.0 - f0) + bot * f0;
}

} // namespace sreg_test
