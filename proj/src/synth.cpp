#include "sreg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sreg/detail/gauss.hpp"
#include "sreg/detail/rng.hpp"
#include "sreg/metrics.hpp"

namespace sreg {

namespace {

constexpr int kLandmarkCount = 10;

struct Blob {
    Vec center;
    double sigma = 0.0;
    double amplitude = 0.0;
};

double blob_value(const Blob& b, std::span<const double> point, int n) {
    double d2 = 0.0;
    for (int a = 0; a < n; ++a) {
        const double d = point[static_cast<size_t>(a)] - b.center[a];
        d2 += d * d;
    }
    return b.amplitude * std::exp(-0.5 * d2 / (b.sigma * b.sigma));
}

Vec random_interior_point(const GridShape& shape, detail::Rng& rng, double margin) {
    Vec p;
    for (int a = 0; a < shape.ndim(); ++a) {
        const double lo = margin;
        const double hi = static_cast<double>(shape.extent(a) - 1) - margin;
        p[a] = rng.uniform(lo, hi);
    }
    return p;
}

double min_extent(const GridShape& shape) {
    int64_t m = shape.extent(0);
    for (int a = 1; a < shape.ndim(); ++a)
        m = std::min(m, shape.extent(a));
    return static_cast<double>(m);
}

} // namespace

BaseScene gen_base(const GridShape& shape, uint64_t seed) {
    detail::Rng rng(seed);
    const int n = shape.ndim();
    const double extent = min_extent(shape);

    // Ten intensity blobs; their centers double as landmarks.
    std::vector<Blob> intensity_blobs;
    for (int i = 0; i < kLandmarkCount; ++i) {
        Blob b;
        b.center = random_interior_point(shape, rng, extent / 8.0);
        b.sigma = rng.uniform(extent / 16.0, extent / 6.0);
        b.amplitude = rng.uniform(0.4, 1.0);
        intensity_blobs.push_back(b);
    }

    // Label disks: centers kept far enough apart that the thresholded
    // regions stay disjoint (and therefore connected).
    const int label_count = 4 + static_cast<int>(rng.below(5)); // 4..8
    const double label_radius = extent / 14.0;
    std::vector<Blob> label_blobs;
    int guard = 0;
    while (static_cast<int>(label_blobs.size()) < label_count && guard < 4000) {
        ++guard;
        Blob b;
        b.center = random_interior_point(shape, rng, label_radius + 2.0);
        b.sigma = label_radius;
        b.amplitude = rng.uniform(0.5, 0.9);
        bool ok = true;
        for (const Blob& other : label_blobs) {
            double d2 = 0.0;
            for (int a = 0; a < n; ++a) {
                const double d = b.center[a] - other.center[a];
                d2 += d * d;
            }
            if (std::sqrt(d2) < 2.0 * label_radius + 3.0)
                ok = false;
        }
        if (ok)
            label_blobs.push_back(b);
    }

    BaseScene scene;
    scene.image = ImageVolume(shape);
    scene.labels = LabelVolume(shape);
    std::array<int64_t, 3> idx{};
    std::array<double, 3> point{};
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        shape.multi_index(v, std::span<int64_t>(idx.data(), static_cast<size_t>(n)));
        for (int a = 0; a < n; ++a)
            point[static_cast<size_t>(a)] = static_cast<double>(idx[static_cast<size_t>(a)]);
        const std::span<const double> p(point.data(), static_cast<size_t>(n));
        double value = 0.0;
        for (const Blob& b : intensity_blobs)
            value += blob_value(b, p, n);
        for (size_t l = 0; l < label_blobs.size(); ++l) {
            const double lv = blob_value(label_blobs[l], p, n);
            value += lv;
            // Threshold at the half-maximum of the label blob: a disk of
            // radius sigma * sqrt(2 ln 2) < separation/2, hence disjoint.
            if (lv > 0.5 * label_blobs[l].amplitude)
                scene.labels.at(v) = static_cast<uint16_t>(l + 1);
        }
        scene.image.at(v) = value;
    }
    // Rescale intensities into [0, 1].
    double hi = 0.0;
    for (double x : scene.image.values)
        hi = std::max(hi, x);
    if (hi > 0.0)
        for (double& x : scene.image.values)
            x /= hi;

    for (const Blob& b : intensity_blobs) {
        scene.landmarks.moving.push_back(b.center);
        scene.landmarks.fixed.push_back(b.center);
    }
    validate_landmarks(scene.landmarks, shape);
    return scene;
}

DisplacementField gen_deformation(const GridShape& shape, double magnitude, double smoothness,
                                  uint64_t seed) {
    if (!(magnitude > 0.0))
        throw ValueError("gen_deformation: magnitude must be positive");
    if (!(smoothness >= 1.0))
        throw ValueError("gen_deformation: smoothness must be >= 1");
    const int n = shape.ndim();
    std::vector<double> scratch(static_cast<size_t>(shape.voxel_count()));
    for (int attempt = 0; attempt < 100; ++attempt) {
        detail::Rng rng(seed + 0x51ab0000u + static_cast<uint64_t>(attempt));
        DisplacementField f(shape);
        for (int c = 0; c < n; ++c) {
            double* plane = f.plane(c);
            for (int64_t v = 0; v < shape.voxel_count(); ++v)
                plane[v] = rng.normal();
            detail::gaussian_smooth_inplace(plane, scratch.data(), shape.dims(), smoothness);
        }
        double max_m2 = 0.0;
        for (int64_t v = 0; v < shape.voxel_count(); ++v) {
            double m2 = 0.0;
            for (int c = 0; c < n; ++c)
                m2 += f.comp(c, v) * f.comp(c, v);
            max_m2 = std::max(max_m2, m2);
        }
        if (max_m2 <= 0.0)
            continue;
        const double scale = magnitude / std::sqrt(max_m2);
        for (double& x : f.components)
            x *= scale;
        if (folding_metrics(f).fv == 0.0)
            return f;
    }
    throw ValueError("gen_deformation: no fold-free sample in 100 attempts; "
                     "reduce magnitude or increase smoothness");
}

namespace {

// Solves q_f + u(q_f) = q_m by fixed-point iteration; converges for the
// smooth, fold-free fields the generator emits.
Vec invert_at_point(const DisplacementField& u, const Vec& q_m, int n) {
    Vec q = q_m;
    std::array<double, 3> p{};
    for (int iter = 0; iter < 200; ++iter) {
        for (int a = 0; a < n; ++a)
            p[static_cast<size_t>(a)] = q[a];
        const Vec disp = sample_linear(u, std::span<const double>(p.data(),
                                                                  static_cast<size_t>(n)));
        double shift = 0.0;
        Vec next;
        for (int a = 0; a < n; ++a) {
            next[a] = q_m[a] - disp[a];
            shift = std::max(shift, std::abs(next[a] - q[a]));
        }
        q = next;
        if (shift < 1e-13)
            break;
    }
    return q;
}

} // namespace

SyntheticPair make_pair(const GridShape& shape, double magnitude, double smoothness,
                        uint64_t seed) {
    SyntheticPair pair;
    pair.seed = seed;
    BaseScene scene = gen_base(shape, seed);
    pair.true_field = gen_deformation(shape, magnitude, smoothness, seed + 1);
    pair.moving = scene.image;
    pair.moving_labels = scene.labels;
    pair.fixed = warp_image(pair.moving, pair.true_field);
    pair.fixed_labels = warp_labels(pair.moving_labels, pair.true_field);

    const int n = shape.ndim();
    pair.landmarks.moving = scene.landmarks.moving;
    for (const Vec& q_m : scene.landmarks.moving) {
        Vec q_f = invert_at_point(pair.true_field, q_m, n);
        // Clamp transported landmarks into bounds (they stay interior for
        // the small magnitudes the generator targets).
        for (int a = 0; a < n; ++a)
            q_f[a] = std::clamp(q_f[a], 0.0, static_cast<double>(shape.extent(a) - 1));
        pair.landmarks.fixed.push_back(q_f);
    }
    validate_landmarks(pair.landmarks, shape);
    return pair;
}

} // namespace sreg
