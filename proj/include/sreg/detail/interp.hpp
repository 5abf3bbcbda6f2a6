#pragma once

#include <cmath>
#include <cstdint>

// Shared interpolation cell math so the plain geometric kernel and the
// tape's warp primitive round identically.

namespace sreg::detail {

struct AxisCell {
    int64_t lo;    // lower grid index of the interpolation cell
    double frac;   // position within the cell, in [0, 1]
    bool interior; // raw coordinate was inside [0, extent-1]
};

inline AxisCell clamp_cell(double x, int64_t extent) {
    const double hi = static_cast<double>(extent - 1);
    const bool interior = x >= 0.0 && x <= hi;
    if (x < 0.0)
        x = 0.0;
    else if (x > hi)
        x = hi;
    int64_t lo = static_cast<int64_t>(std::floor(x));
    if (lo > extent - 2)
        lo = extent - 2;
    return {lo, x - static_cast<double>(lo), interior};
}

inline double lerp2(const double* base, int64_t s0, const AxisCell& a0, const AxisCell& a1) {
    const double* row0 = base + a0.lo * s0 + a1.lo;
    const double* row1 = row0 + s0;
    const double v0 = row0[0] * (1.0 - a1.frac) + row0[1] * a1.frac;
    const double v1 = row1[0] * (1.0 - a1.frac) + row1[1] * a1.frac;
    return v0 * (1.0 - a0.frac) + v1 * a0.frac;
}

inline double lerp3(const double* base, int64_t s0, int64_t s1, const AxisCell& a0,
                    const AxisCell& a1, const AxisCell& a2) {
    const double* cell = base + a0.lo * s0 + a1.lo * s1 + a2.lo;
    auto plane = [&](const double* q) {
        const double v0 = q[0] * (1.0 - a2.frac) + q[1] * a2.frac;
        const double v1 = q[s1] * (1.0 - a2.frac) + q[s1 + 1] * a2.frac;
        return v0 * (1.0 - a1.frac) + v1 * a1.frac;
    };
    return plane(cell) * (1.0 - a0.frac) + plane(cell + s0) * a0.frac;
}

} // namespace sreg::detail
