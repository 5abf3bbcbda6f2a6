#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sreg {

struct GradCheckCase {
    std::string name;
    double max_rel_error = 0.0; // worst over all seeds
    double threshold = 1e-4;
    bool pass = false;
};

// Finite-difference validation of every differentiable loss term (NCC,
// SSD, smoothness, self-sanity, masked cross-sanity, NCC-of-warp) and the
// TinyNet forward, on randomized 8x8 instances. Instances are resampled
// when they land too close to interpolation-cell or ReLU kinks, where
// central differences straddle a slope change.
std::vector<GradCheckCase> run_gradcheck_suite(int seeds, uint64_t base_seed);

bool all_pass(const std::vector<GradCheckCase>& cases);

} // namespace sreg
