#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

// Separable truncated box-window sums shared by the plain NCC path and the
// tape primitive. Contributions outside the grid are dropped, so window
// counts shrink at the boundary.

namespace sreg::detail {

inline void box_pass(const double* in, double* out, std::span<const int64_t> dims, int axis,
                     int64_t radius) {
    const int64_t d = dims[static_cast<size_t>(axis)];
    int64_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a)
        outer *= dims[static_cast<size_t>(a)];
    for (size_t a = static_cast<size_t>(axis) + 1; a < dims.size(); ++a)
        inner *= dims[a];
    for (int64_t o = 0; o < outer; ++o) {
        const double* ib = in + o * d * inner;
        double* ob = out + o * d * inner;
        for (int64_t i = 0; i < d; ++i) {
            const int64_t j0 = std::max<int64_t>(0, i - radius);
            const int64_t j1 = std::min<int64_t>(d - 1, i + radius);
            for (int64_t k = 0; k < inner; ++k) {
                double acc = 0.0;
                for (int64_t j = j0; j <= j1; ++j)
                    acc += ib[j * inner + k];
                ob[i * inner + k] = acc;
            }
        }
    }
}

// In-place separable box sum over every axis; scratch must match data size.
inline void box_sum_inplace(double* data, double* scratch, std::span<const int64_t> dims,
                            std::span<const int64_t> window) {
    int64_t count = 1;
    for (int64_t d : dims)
        count *= d;
    for (size_t a = 0; a < dims.size(); ++a) {
        box_pass(data, scratch, dims, static_cast<int>(a), (window[a] - 1) / 2);
        std::swap_ranges(data, data + count, scratch);
    }
}

} // namespace sreg::detail
