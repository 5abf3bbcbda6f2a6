#include "sreg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

namespace sreg {

double dice(const LabelVolume& warped, const LabelVolume& target) {
    require_same_shape(warped.shape, target.shape, "dice");
    std::map<uint16_t, std::array<int64_t, 3>> counts; // label -> {|A|, |B|, |A n B|}
    for (size_t i = 0; i < warped.labels.size(); ++i) {
        const uint16_t a = warped.labels[i];
        const uint16_t b = target.labels[i];
        if (a != 0)
            ++counts[a][0];
        if (b != 0)
            ++counts[b][1];
        if (a != 0 && a == b)
            ++counts[a][2];
    }
    if (counts.empty())
        throw ValueError("dice: no foreground labels in either volume");
    double acc = 0.0;
    for (const auto& [label, c] : counts)
        acc += 2.0 * static_cast<double>(c[2]) / static_cast<double>(c[0] + c[1]);
    return acc / static_cast<double>(counts.size());
}

double sdice(const TinyNet& net, const ImageVolume& image, const LabelVolume& labels) {
    const DisplacementField self_field = infer(net, image, image);
    return dice(warp_labels(labels, self_field), labels);
}

FoldingMetrics folding_metrics(const DisplacementField& field) {
    const ImageVolume dets = jacobian_determinants(field);
    const int64_t n = field.shape.voxel_count();
    FoldingMetrics out;
    int64_t folded = 0;
    double log_sum = 0.0, log_sq = 0.0;
    for (int64_t v = 0; v < n; ++v) {
        const double det = dets.at(v);
        if (det < 0.0) {
            ++folded;
            out.aj += -det;
        }
        const double lg = std::log(std::max(det, 1e-9));
        log_sum += lg;
        log_sq += lg * lg;
    }
    out.fv = 100.0 * static_cast<double>(folded) / static_cast<double>(n);
    const double mean = log_sum / static_cast<double>(n);
    const double var = std::max(0.0, log_sq / static_cast<double>(n) - mean * mean);
    out.sdlogj = std::sqrt(var);
    return out;
}

namespace {

// Foreground boundary voxels under face connectivity; grid border voxels
// count as boundary.
std::vector<std::array<int64_t, 3>> boundary_voxels(const LabelVolume& vol) {
    const GridShape& shape = vol.shape;
    const int n = shape.ndim();
    std::vector<std::array<int64_t, 3>> out;
    std::array<int64_t, 3> idx{};
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        if (vol.at(v) == 0)
            continue;
        shape.multi_index(v, std::span<int64_t>(idx.data(), static_cast<size_t>(n)));
        bool boundary = false;
        for (int a = 0; a < n && !boundary; ++a) {
            const int64_t i = idx[static_cast<size_t>(a)];
            if (i == 0 || i == shape.extent(a) - 1) {
                boundary = true;
                break;
            }
            if (vol.at(v - shape.stride(a)) == 0 || vol.at(v + shape.stride(a)) == 0)
                boundary = true;
        }
        if (boundary)
            out.push_back(idx);
    }
    return out;
}

double directed_percentile95(const std::vector<std::array<int64_t, 3>>& from,
                             const std::vector<std::array<int64_t, 3>>& to, int n) {
    std::vector<double> dists;
    dists.reserve(from.size());
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::max();
        for (const auto& q : to) {
            double d2 = 0.0;
            for (int a = 0; a < n; ++a) {
                const double d = static_cast<double>(p[static_cast<size_t>(a)] -
                                                     q[static_cast<size_t>(a)]);
                d2 += d * d;
            }
            best = std::min(best, d2);
        }
        dists.push_back(std::sqrt(best));
    }
    std::sort(dists.begin(), dists.end());
    // Nearest-rank 95th percentile.
    const size_t rank = static_cast<size_t>(
        std::ceil(0.95 * static_cast<double>(dists.size())));
    return dists[std::max<size_t>(rank, 1) - 1];
}

} // namespace

double hd95(const LabelVolume& warped, const LabelVolume& target) {
    require_same_shape(warped.shape, target.shape, "hd95");
    const auto ba = boundary_voxels(warped);
    const auto bb = boundary_voxels(target);
    if (ba.empty() || bb.empty())
        throw ValueError("hd95: empty foreground");
    const int n = warped.shape.ndim();
    return std::max(directed_percentile95(ba, bb, n), directed_percentile95(bb, ba, n));
}

LandmarkMetrics landmark_metrics(const LandmarkSet& landmarks, const DisplacementField& g_mf,
                                 const DisplacementField& g_self, std::span<const double> spacing,
                                 std::span<const double> initial_errors) {
    require_same_shape(g_mf.shape, g_self.shape, "landmark_metrics");
    validate_landmarks(landmarks, g_mf.shape);
    if (!initial_errors.empty() && initial_errors.size() != landmarks.size())
        throw ValueError("landmark_metrics: initial error count mismatch");
    const int n = g_mf.shape.ndim();
    auto spacing_for = [&](int a) {
        return spacing.empty() ? 1.0 : spacing[static_cast<size_t>(a)];
    };

    LandmarkMetrics out;
    if (landmarks.size() == 0)
        return out;
    int64_t successes = 0;
    for (size_t i = 0; i < landmarks.size(); ++i) {
        const Vec& qf = landmarks.fixed[i];
        const Vec& qm = landmarks.moving[i];
        const Vec disp = sample_linear(g_mf, std::span<const double>(qf.v.data(),
                                                                     static_cast<size_t>(n)));
        double err2 = 0.0, init2 = 0.0, self2 = 0.0;
        const Vec self_disp = sample_linear(
            g_self, std::span<const double>(qm.v.data(), static_cast<size_t>(n)));
        for (int a = 0; a < n; ++a) {
            const double s = spacing_for(a);
            const double e = (qf[a] + disp[a] - qm[a]) * s;
            err2 += e * e;
            const double i0 = (qf[a] - qm[a]) * s;
            init2 += i0 * i0;
            const double se = self_disp[a] * s;
            self2 += se * se;
        }
        const double err = std::sqrt(err2);
        const double init = initial_errors.empty() ? std::sqrt(init2)
                                                   : initial_errors[i];
        out.tre += err;
        out.stre += std::sqrt(self2);
        if (err < init || (init == 0.0 && err == 0.0))
            ++successes;
    }
    const double count = static_cast<double>(landmarks.size());
    out.tre /= count;
    out.stre /= count;
    out.rob = static_cast<double>(successes) / count;
    return out;
}

SanityMetrics sanity_metrics(const DisplacementField& g_mf, const DisplacementField& g_fm,
                             const DisplacementField& g_mm, const DisplacementField& g_ff,
                             const SanityConfig& cfg) {
    require_same_shape(g_mf.shape, g_fm.shape, "sanity_metrics");
    require_same_shape(g_mf.shape, g_mm.shape, "sanity_metrics");
    const double n = static_cast<double>(g_mf.shape.voxel_count());
    SanityMetrics out;
    out.sse = self_sanity_loss(g_mm, g_ff) / n;
    out.cse = bidirectional_cross_sanity(g_mf, g_fm, cfg).loss / n;
    return out;
}

double cice(const DisplacementField& g_mf, const DisplacementField& g_fm) {
    require_same_shape(g_mf.shape, g_fm.shape, "cice");
    const DisplacementField bp_fm = back_project(g_mf, g_fm);
    const DisplacementField bp_mf = back_project(g_fm, g_mf);
    const int n = g_mf.ndim();
    const int64_t voxels = g_mf.shape.voxel_count();
    double acc = 0.0;
    for (int64_t v = 0; v < voxels; ++v) {
        for (int c = 0; c < n; ++c) {
            const double a = g_mf.comp(c, v) + bp_fm.comp(c, v);
            const double b = g_fm.comp(c, v) + bp_mf.comp(c, v);
            acc += a * a + b * b;
        }
    }
    return acc / (2.0 * static_cast<double>(voxels));
}

} // namespace sreg
