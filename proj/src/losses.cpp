#include "sreg/losses.hpp"

#include <cmath>

#include "sreg/detail/boxsum.hpp"

namespace sreg {

namespace {
constexpr double kVarianceFloor = 1e-5;
}

void SanityConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValueError("sanity config: alpha must lie in (0,1)");
    if (!(beta > 0.0))
        throw ValueError("sanity config: beta must be positive");
    if (lambda_r < 0.0 || lambda_s < 0.0 || lambda_c < 0.0)
        throw ValueError("sanity config: loss weights must be non-negative");
    if (ncc_window < 1 || ncc_window % 2 == 0)
        throw ValueError("sanity config: ncc window must be odd and positive");
    for (double s : spacing)
        if (!(s > 0.0))
            throw ValueError("sanity config: spacing entries must be positive");
}

int64_t ViolationMask::violator_count() const {
    int64_t n = 0;
    for (uint8_t b : bits)
        n += b;
    return n;
}

double ViolationMask::violator_fraction() const {
    if (bits.empty())
        return 0.0;
    return static_cast<double>(violator_count()) / static_cast<double>(bits.size());
}

double ncc(const ImageVolume& a, const ImageVolume& b, int window) {
    require_same_shape(a.shape, b.shape, "ncc");
    if (window < 1 || window % 2 == 0)
        throw ValueError("ncc: window must be odd and positive");
    const GridShape& shape = a.shape;
    const int64_t n = shape.voxel_count();
    const std::vector<int64_t> win(static_cast<size_t>(shape.ndim()),
                                   static_cast<int64_t>(window));

    std::vector<double> sa = a.values, sb = b.values;
    std::vector<double> saa(static_cast<size_t>(n)), sbb(static_cast<size_t>(n)),
        sab(static_cast<size_t>(n)), cnt(static_cast<size_t>(n), 1.0);
    for (int64_t i = 0; i < n; ++i) {
        const auto u = static_cast<size_t>(i);
        saa[u] = a.values[u] * a.values[u];
        sbb[u] = b.values[u] * b.values[u];
        sab[u] = a.values[u] * b.values[u];
    }
    std::vector<double> scratch(static_cast<size_t>(n));
    auto box = [&](std::vector<double>& v) {
        detail::box_sum_inplace(v.data(), scratch.data(), shape.dims(), win);
    };
    box(sa);
    box(sb);
    box(saa);
    box(sbb);
    box(sab);
    box(cnt);

    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const auto u = static_cast<size_t>(i);
        const double cross = sab[u] - sa[u] * sb[u] / cnt[u];
        const double var_a = saa[u] - sa[u] * sa[u] / cnt[u];
        const double var_b = sbb[u] - sb[u] * sb[u] / cnt[u];
        acc += cross * cross /
               (std::max(var_a, kVarianceFloor) * std::max(var_b, kVarianceFloor));
    }
    return acc / static_cast<double>(n);
}

double ssd(const ImageVolume& a, const ImageVolume& b) {
    require_same_shape(a.shape, b.shape, "ssd");
    double acc = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        acc += d * d;
    }
    return acc;
}

double grad_reg(const DisplacementField& field) {
    const GridShape& shape = field.shape;
    const int ndim = shape.ndim();
    double acc = 0.0;
    int64_t terms = 0;
    for (int c = 0; c < ndim; ++c) {
        const double* plane = field.plane(c);
        for (int axis = 0; axis < ndim; ++axis) {
            const int64_t d = shape.extent(axis);
            const int64_t stride = shape.stride(axis);
            int64_t outer = 1, inner = 1;
            for (int a = 0; a < axis; ++a)
                outer *= shape.extent(a);
            for (int a = axis + 1; a < ndim; ++a)
                inner *= shape.extent(a);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i + 1 < d; ++i) {
                    const double* base = plane + (o * d + i) * inner;
                    for (int64_t k = 0; k < inner; ++k) {
                        const double diff = base[stride + k] - base[k];
                        acc += diff * diff;
                    }
                }
            terms += outer * (d - 1) * inner;
        }
    }
    return terms == 0 ? 0.0 : acc / static_cast<double>(terms);
}

double self_sanity_loss(const DisplacementField& g_mm, const DisplacementField& g_ff) {
    require_same_shape(g_mm.shape, g_ff.shape, "self_sanity_loss");
    double acc = 0.0;
    for (double x : g_mm.components)
        acc += x * x;
    for (double x : g_ff.components)
        acc += x * x;
    return 0.5 * acc;
}

ViolationMask cross_sanity_mask(const DisplacementField& g_ab,
                                const DisplacementField& g_tilde_ba, const SanityConfig& cfg) {
    require_same_shape(g_ab.shape, g_tilde_ba.shape, "cross_sanity_mask");
    cfg.validate();
    const GridShape& shape = g_ab.shape;
    const int n = shape.ndim();
    ViolationMask mask(shape);
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        double lhs = 0.0, ga2 = 0.0, gb2 = 0.0;
        for (int c = 0; c < n; ++c) {
            const double ga = g_ab.comp(c, v);
            const double gb = g_tilde_ba.comp(c, v);
            lhs += (ga + gb) * (ga + gb);
            ga2 += ga * ga;
            gb2 += gb * gb;
        }
        const bool ok = lhs < cfg.alpha * (ga2 + gb2) + cfg.beta;
        mask.bits[static_cast<size_t>(v)] = ok ? 0 : 1;
    }
    return mask;
}

double cross_sanity_loss(const DisplacementField& g_ab, const DisplacementField& g_tilde_ba,
                         const ViolationMask& mask, const SanityConfig& cfg) {
    require_same_shape(g_ab.shape, g_tilde_ba.shape, "cross_sanity_loss");
    require_same_shape(g_ab.shape, mask.shape, "cross_sanity_loss mask");
    const GridShape& shape = g_ab.shape;
    const int n = shape.ndim();
    double sum_pair = 0.0, sum_a = 0.0, sum_b = 0.0;
    int64_t violators = 0;
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        if (!mask.bits[static_cast<size_t>(v)])
            continue;
        ++violators;
        for (int c = 0; c < n; ++c) {
            const double ga = g_ab.comp(c, v);
            const double gb = g_tilde_ba.comp(c, v);
            sum_pair += (ga + gb) * (ga + gb);
            sum_a += ga * ga;
            sum_b += gb * gb;
        }
    }
    return sum_pair - cfg.alpha * (sum_a + sum_b) - cfg.beta * static_cast<double>(violators);
}

CrossSanityTerms bidirectional_cross_sanity(const DisplacementField& g_mf,
                                            const DisplacementField& g_fm,
                                            const SanityConfig& cfg) {
    CrossSanityTerms out;
    out.back_projected_fm = back_project(g_mf, g_fm);
    out.back_projected_mf = back_project(g_fm, g_mf);
    out.mask_mf = cross_sanity_mask(g_mf, out.back_projected_fm, cfg);
    out.mask_fm = cross_sanity_mask(g_fm, out.back_projected_mf, cfg);
    out.loss_mf = cross_sanity_loss(g_mf, out.back_projected_fm, out.mask_mf, cfg);
    out.loss_fm = cross_sanity_loss(g_fm, out.back_projected_mf, out.mask_fm, cfg);
    out.loss = 0.5 * (out.loss_mf + out.loss_fm);
    return out;
}

LossBreakdown total_loss(const PairFields& pair, const SanityConfig& cfg, Similarity sim) {
    cfg.validate();
    require_same_shape(pair.moving.shape, pair.fixed.shape, "total_loss");
    require_same_shape(pair.moving.shape, pair.g_mf.shape, "total_loss g_mf");
    require_same_shape(pair.moving.shape, pair.g_fm.shape, "total_loss g_fm");
    require_same_shape(pair.moving.shape, pair.g_mm.shape, "total_loss g_mm");
    require_same_shape(pair.moving.shape, pair.g_ff.shape, "total_loss g_ff");

    LossBreakdown out;
    const ImageVolume warped_m = warp_image(pair.moving, pair.g_mf);
    const ImageVolume warped_f = warp_image(pair.fixed, pair.g_fm);
    if (sim == Similarity::kNcc)
        out.sim = -(ncc(pair.fixed, warped_m, cfg.ncc_window) +
                    ncc(pair.moving, warped_f, cfg.ncc_window));
    else
        out.sim = ssd(pair.fixed, warped_m) + ssd(pair.moving, warped_f);
    out.reg = grad_reg(pair.g_mf) + grad_reg(pair.g_fm);
    out.self_sanity = self_sanity_loss(pair.g_mm, pair.g_ff);
    out.cross = bidirectional_cross_sanity(pair.g_mf, pair.g_fm, cfg).loss;
    out.total = out.sim + cfg.lambda_r * out.reg + cfg.lambda_s * out.self_sanity +
                cfg.lambda_c * out.cross;
    return out;
}

} // namespace sreg
