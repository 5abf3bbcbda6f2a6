#pragma once

#include <cstdint>
#include <vector>

#include "sreg/grid.hpp"

namespace sreg {

// One generated benchmark pair with its known-truth deformation.
struct SyntheticPair {
    ImageVolume moving;
    ImageVolume fixed;
    LabelVolume moving_labels;
    LabelVolume fixed_labels;
    DisplacementField true_field;
    LandmarkSet landmarks;
    uint64_t seed = 0;
};

struct BaseScene {
    ImageVolume image;
    LabelVolume labels;
    LandmarkSet landmarks; // coincident moving/fixed points at blob centers
};

// Deterministic composition of smooth Gaussian blobs with disjoint
// connected label disks and ten landmarks at blob centers; intensities in
// [0, 1].
BaseScene gen_base(const GridShape& shape, uint64_t seed);

// Gaussian-smoothed white noise rescaled so the maximum per-voxel
// magnitude equals `magnitude` exactly; resampled until the field is
// fold-free. Throws ValueError when 100 attempts are exhausted.
DisplacementField gen_deformation(const GridShape& shape, double magnitude, double smoothness,
                                  uint64_t seed);

// Base scene plus deformation: fixed = moving warped by the true field,
// fixed labels warped nearest-neighbor, fixed landmarks transported
// exactly through the true field (solving q_f + u(q_f) = q_m).
SyntheticPair make_pair(const GridShape& shape, double magnitude, double smoothness,
                        uint64_t seed);

} // namespace sreg
