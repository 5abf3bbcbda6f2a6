#pragma once

#include <cstdint>
#include <vector>

#include "sreg/grid.hpp"

namespace sreg {

enum class Similarity { kNcc, kSsd };

// Sanity-check relaxation parameters and loss weights.
struct SanityConfig {
    double alpha = 0.1;
    double beta = 10.0;
    double lambda_r = 1.0;
    double lambda_s = 0.1;
    double lambda_c = 0.001;
    int ncc_window = 9;           // per axis, odd
    std::vector<double> spacing;  // physical units per axis; empty means 1

    void validate() const;
    double spacing_for(int axis) const {
        return spacing.empty() ? 1.0 : spacing[static_cast<size_t>(axis)];
    }
};

// One bit per voxel; 1 marks a cross-sanity-check violation.
struct ViolationMask {
    GridShape shape;
    std::vector<uint8_t> bits;

    ViolationMask() = default;
    explicit ViolationMask(const GridShape& s)
        : shape(s), bits(static_cast<size_t>(s.voxel_count()), 0) {}

    int64_t violator_count() const;
    double violator_fraction() const;
};

// Mean over voxels of the squared local correlation coefficient within a
// boundary-clipped window; variance denominators floored at 1e-5. Returned
// as a similarity in [0, 1]; the loss term is its negation.
double ncc(const ImageVolume& a, const ImageVolume& b, int window);

// Sum of squared intensity differences.
double ssd(const ImageVolume& a, const ImageVolume& b);

// Mean over all valid first-order forward differences (every axis, every
// component) of the squared difference; the final stencil along each axis
// is omitted.
double grad_reg(const DisplacementField& field);

// (|g_mm|^2 + |g_ff|^2) / 2, summing squared components over all voxels.
double self_sanity_loss(const DisplacementField& g_mm, const DisplacementField& g_ff);

// Per voxel, bit = 0 iff |g+g~|^2 < alpha(|g|^2 + |g~|^2) + beta strictly;
// ties count as violations.
ViolationMask cross_sanity_mask(const DisplacementField& g_ab,
                                const DisplacementField& g_tilde_ba, const SanityConfig& cfg);

// ||M(g+g~)||^2 - alpha(||Mg||^2 + ||Mg~||^2) - beta * violator_count,
// for a single direction.
double cross_sanity_loss(const DisplacementField& g_ab, const DisplacementField& g_tilde_ba,
                         const ViolationMask& mask, const SanityConfig& cfg);

// Both directions of the masked cross-sanity loss, averaged.
struct CrossSanityTerms {
    DisplacementField back_projected_fm; // g~^{f->m}(p) = g^{f->m}(p + g^{m->f}(p))
    DisplacementField back_projected_mf;
    ViolationMask mask_mf;
    ViolationMask mask_fm;
    double loss_mf = 0.0;
    double loss_fm = 0.0;
    double loss = 0.0; // (loss_mf + loss_fm) / 2
};
CrossSanityTerms bidirectional_cross_sanity(const DisplacementField& g_mf,
                                            const DisplacementField& g_fm,
                                            const SanityConfig& cfg);

struct PairFields {
    const ImageVolume& moving;
    const ImageVolume& fixed;
    const DisplacementField& g_mf;
    const DisplacementField& g_fm;
    const DisplacementField& g_mm;
    const DisplacementField& g_ff;
};

// Unweighted term values plus the weighted total of the bidirectional
// objective.
struct LossBreakdown {
    double sim = 0.0;
    double reg = 0.0;
    double self_sanity = 0.0;
    double cross = 0.0;
    double total = 0.0;
};

LossBreakdown total_loss(const PairFields& pair, const SanityConfig& cfg,
                         Similarity sim = Similarity::kNcc);

} // namespace sreg
