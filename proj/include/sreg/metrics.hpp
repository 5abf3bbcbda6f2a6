#pragma once

#include <span>
#include <vector>

#include "sreg/grid.hpp"
#include "sreg/losses.hpp"
#include "sreg/registrator.hpp"

namespace sreg {

// Flat record of every evaluation metric for one registered pair.
struct MetricsReport {
    double dice = 0.0;
    double sdice = 0.0;
    double hd95 = 0.0;
    double fv = 0.0;     // percentage of folded voxels
    double aj = 0.0;     // summed magnitude of negative determinants
    double sdlogj = 0.0;
    double tre = 0.0;
    double stre = 0.0;
    double rob = 0.0;
    double sse = 0.0;
    double cse = 0.0;
    double cice = 0.0;
};

// Mean over foreground labels of 2|A n B| / (|A| + |B|). Labels present in
// neither volume are skipped; throws ValueError when no label has any
// foreground at all.
double dice(const LabelVolume& warped, const LabelVolume& target);

// Dice after warping the labels by the model's identical-pair field.
double sdice(const TinyNet& net, const ImageVolume& image, const LabelVolume& labels);

struct FoldingMetrics {
    double fv = 0.0;
    double aj = 0.0;
    double sdlogj = 0.0;
};

// fv = 100 * #{det<0}/N; aj = sum of |det| over folded voxels; sdlogj =
// population standard deviation of log(max(det, 1e-9)).
FoldingMetrics folding_metrics(const DisplacementField& field);

// Symmetric 95th-percentile Hausdorff distance over boundary voxels of the
// binary foreground (any nonzero label), exact Euclidean distances,
// nearest-rank percentile, max of the two directed values.
double hd95(const LabelVolume& warped, const LabelVolume& target);

struct LandmarkMetrics {
    double tre = 0.0;
    double stre = 0.0;
    double rob = 0.0;
};

// tre: mean distance (physical units) between each fixed landmark mapped
// through g_mf and its paired moving landmark. stre: mean displacement
// magnitude of the identical-pair field at the moving landmarks. rob:
// fraction of landmarks whose error ends strictly below their initial
// error (an initial error of exactly zero counts as success when the final
// error is also zero). When initial_errors is empty the initial error is
// the plain landmark distance.
LandmarkMetrics landmark_metrics(const LandmarkSet& landmarks, const DisplacementField& g_mf,
                                 const DisplacementField& g_self, std::span<const double> spacing,
                                 std::span<const double> initial_errors = {});

struct SanityMetrics {
    double sse = 0.0;
    double cse = 0.0;
};

// sse = self-sanity loss / N; cse = bidirectional masked cross-sanity
// loss / N.
SanityMetrics sanity_metrics(const DisplacementField& g_mf, const DisplacementField& g_fm,
                             const DisplacementField& g_mm, const DisplacementField& g_ff,
                             const SanityConfig& cfg);

// Mean over voxels and both directions of |g + g~|^2: the strict
// (alpha = beta = 0) limit of the cross-sanity error.
double cice(const DisplacementField& g_mf, const DisplacementField& g_fm);

} // namespace sreg
