#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

// Separable Gaussian smoothing with a truncated kernel, renormalized per
// position at the boundary. Fixed summation order keeps results
// reproducible.

namespace sreg::detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    for (int64_t i = -radius; i <= radius; ++i)
        k[static_cast<size_t>(i + radius)] =
            std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    return k;
}

inline void gaussian_pass(const double* in, double* out, std::span<const int64_t> dims, int axis,
                          std::span<const double> kernel) {
    const int64_t d = dims[static_cast<size_t>(axis)];
    const int64_t radius = (static_cast<int64_t>(kernel.size()) - 1) / 2;
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
                double acc = 0.0, wsum = 0.0;
                for (int64_t j = j0; j <= j1; ++j) {
                    const double w = kernel[static_cast<size_t>(j - i + radius)];
                    acc += w * ib[j * inner + k];
                    wsum += w;
                }
                ob[i * inner + k] = acc / wsum;
            }
        }
    }
}

inline void gaussian_smooth_inplace(double* data, double* scratch, std::span<const int64_t> dims,
                                    double sigma) {
    if (sigma <= 0.0)
        return;
    const std::vector<double> kernel = gaussian_kernel(sigma);
    int64_t count = 1;
    for (int64_t d : dims)
        count *= d;
    for (size_t a = 0; a < dims.size(); ++a) {
        gaussian_pass(data, scratch, dims, static_cast<int>(a), kernel);
        std::copy(scratch, scratch + count, data);
    }
}

} // namespace sreg::detail
