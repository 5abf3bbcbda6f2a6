#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sreg/grid.hpp"
#include "sreg/losses.hpp"

namespace sreg {

// Observed quantity vs. theoretical bound for one check.
struct BoundReport {
    std::string context; // which theorem / check
    double alpha = 0.0;
    double beta = 0.0;
    int64_t voxels = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0; // rhs - lhs
    bool satisfied = false;

    static BoundReport make(std::string context, double alpha, double beta, int64_t voxels,
                            double lhs, double rhs) {
        BoundReport r{std::move(context), alpha, beta, voxels, lhs, rhs, rhs - lhs,
                      rhs - lhs > 0.0};
        return r;
    }
};

// Relaxation bound: for a field pair that satisfies the cross-sanity check
// at every voxel and has pointwise g . g~ <= 0, checks
// ||g + g~||^2 < beta (2-alpha) N / (1-alpha). Throws PreconditionError
// naming the first offending voxel if the hypotheses fail.
BoundReport verify_relaxation_bound(const DisplacementField& g_ab,
                                    const DisplacementField& g_tilde_ba,
                                    const SanityConfig& cfg);

// Bidirectional CS-error bound: evaluates
// CS = ||g_c + g~_c||^2 - alpha(||g_c||^2 + ||g~_c||^2) - 2 beta N
// over both directions (back-projections computed here) and checks
// CS < 2 (1-alpha) beta N under the same per-voxel hypotheses.
BoundReport verify_cs_bound(const DisplacementField& g_mf, const DisplacementField& g_fm,
                            const SanityConfig& cfg);

// Loyalty-bound guidance for picking the cross-sanity loss weight.
struct LambdaCGuidance {
    double alpha = 0.0;
    double beta = 0.0;
    double per_voxel_factor = 0.0;     // (1-alpha) beta
    double budget = 0.0;               // per-voxel per-direction loyalty budget
    double recommended_lambda_c = 0.0; // budget / per_voxel_factor
};

LambdaCGuidance lambda_c_guidance(double alpha, double beta, double budget = 0.01);

// Per-voxel per-direction loyalty bound lambda_c (1-alpha) beta.
double loyalty_bound(const LambdaCGuidance& g, double lambda_c);
bool lambda_c_is_loose(const LambdaCGuidance& g, double lambda_c);

// The three normalizations of the loyalty bound reported side by side
// (per voxel per direction, per-N, and the full two-direction form).
struct LoyaltyBounds {
    double per_voxel_per_direction = 0.0; // lambda_c (1-alpha) beta
    double per_total = 0.0;               // lambda_c (1-alpha) beta N
    double full = 0.0;                    // 2 lambda_c (1-alpha) beta N
};
LoyaltyBounds loyalty_bounds(double alpha, double beta, double lambda_c, int64_t voxels);

// Heuristic relaxation parameters from sample displacement fields:
// beta = 0.15 x maximum displacement magnitude; alpha depends on whether
// the model outputs absolute or normalized displacements.
enum class DisplacementKind { kAbsolute, kNormalized };
struct AlphaBeta {
    double alpha = 0.0;
    double beta = 0.0;
};
AlphaBeta estimate_alpha_beta(std::span<const DisplacementField> samples, DisplacementKind kind);

// Componentwise ratio check g/g~ + g~/g < 2/(1-alpha), evaluated only
// where both magnitudes exceed 1e-8 and the product is negative.
struct RatioBoundResult {
    std::vector<uint8_t> satisfied; // per voxel
    std::vector<uint8_t> evaluated; // per voxel
    int64_t evaluated_count = 0;
    int64_t satisfied_count = 0;
    double satisfied_fraction = 0.0; // over evaluated voxels
};
RatioBoundResult check_ratio_bound(const DisplacementField& g_ab,
                                   const DisplacementField& g_tilde_ba, double alpha);

// Budget admissibility of the relaxation: ||g||^2 <= B for each field and
// 2 alpha B + beta N < B.
struct BudgetReport {
    std::vector<double> field_norms;
    double budget = 0.0;
    bool fields_within_budget = false;
    double admissibility_lhs = 0.0; // 2 alpha B + beta N
    bool admissible = false;
};
BudgetReport check_budget_condition(std::span<const DisplacementField> fields, double budget,
                                    double alpha, double beta, int64_t voxels);

// Rejection sampler for check-satisfying pairs: smooth random g with
// g~ = -g + eps * noise, eps shrunk until every voxel passes the check and
// the sign condition. Returns the pair (g, g~) directly.
struct SampledPair {
    DisplacementField g;
    DisplacementField g_tilde;
};
SampledPair sample_satisfying_pair(const GridShape& shape, const SanityConfig& cfg,
                                   uint64_t seed);

// Same idea for a directional pair (g_mf, g_fm) whose back-projections
// must satisfy the per-voxel check in both directions.
struct SampledDirectionalPair {
    DisplacementField g_mf;
    DisplacementField g_fm;
};
SampledDirectionalPair sample_satisfying_directional_pair(const GridShape& shape,
                                                          const SanityConfig& cfg,
                                                          uint64_t seed);

} // namespace sreg
