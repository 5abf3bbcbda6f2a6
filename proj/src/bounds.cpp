#include "sreg/bounds.hpp"

#include <cmath>

#include "sreg/detail/gauss.hpp"
#include "sreg/detail/rng.hpp"

namespace sreg {

namespace {

// First voxel violating the pointwise check or the sign condition, or -1.
int64_t first_precondition_violation(const DisplacementField& g, const DisplacementField& gt,
                                     const SanityConfig& cfg) {
    const int n = g.ndim();
    for (int64_t v = 0; v < g.shape.voxel_count(); ++v) {
        double lhs = 0.0, a2 = 0.0, b2 = 0.0, prod = 0.0;
        for (int c = 0; c < n; ++c) {
            const double x = g.comp(c, v);
            const double y = gt.comp(c, v);
            lhs += (x + y) * (x + y);
            a2 += x * x;
            b2 += y * y;
            prod += x * y;
        }
        if (!(lhs < cfg.alpha * (a2 + b2) + cfg.beta))
            return v;
        if (prod > 0.0)
            return v;
    }
    return -1;
}

double sum_squared_pair(const DisplacementField& g, const DisplacementField& gt) {
    double acc = 0.0;
    for (size_t i = 0; i < g.components.size(); ++i) {
        const double s = g.components[i] + gt.components[i];
        acc += s * s;
    }
    return acc;
}

double sum_squared(const DisplacementField& g) {
    double acc = 0.0;
    for (double x : g.components)
        acc += x * x;
    return acc;
}

} // namespace

BoundReport verify_relaxation_bound(const DisplacementField& g_ab,
                                    const DisplacementField& g_tilde_ba,
                                    const SanityConfig& cfg) {
    require_same_shape(g_ab.shape, g_tilde_ba.shape, "verify_relaxation_bound");
    cfg.validate();
    const int64_t bad = first_precondition_violation(g_ab, g_tilde_ba, cfg);
    if (bad >= 0)
        throw PreconditionError("relaxation bound: hypotheses fail at voxel " +
                                    std::to_string(bad),
                                bad);
    const int64_t n = g_ab.shape.voxel_count();
    const double lhs = sum_squared_pair(g_ab, g_tilde_ba);
    const double rhs = cfg.beta * (2.0 - cfg.alpha) * static_cast<double>(n) / (1.0 - cfg.alpha);
    return BoundReport::make("thm1", cfg.alpha, cfg.beta, n, lhs, rhs);
}

BoundReport verify_cs_bound(const DisplacementField& g_mf, const DisplacementField& g_fm,
                            const SanityConfig& cfg) {
    require_same_shape(g_mf.shape, g_fm.shape, "verify_cs_bound");
    cfg.validate();
    const DisplacementField bp_fm = back_project(g_mf, g_fm);
    const DisplacementField bp_mf = back_project(g_fm, g_mf);
    int64_t bad = first_precondition_violation(g_mf, bp_fm, cfg);
    if (bad < 0)
        bad = first_precondition_violation(g_fm, bp_mf, cfg);
    if (bad >= 0)
        throw PreconditionError("cs bound: hypotheses fail at voxel " + std::to_string(bad), bad);
    const int64_t n = g_mf.shape.voxel_count();
    const double pair_norm = sum_squared_pair(g_mf, bp_fm) + sum_squared_pair(g_fm, bp_mf);
    const double norms =
        sum_squared(g_mf) + sum_squared(bp_fm) + sum_squared(g_fm) + sum_squared(bp_mf);
    const double cs =
        pair_norm - cfg.alpha * norms - 2.0 * cfg.beta * static_cast<double>(n);
    const double rhs = 2.0 * (1.0 - cfg.alpha) * cfg.beta * static_cast<double>(n);
    return BoundReport::make("cs", cfg.alpha, cfg.beta, n, cs, rhs);
}

LambdaCGuidance lambda_c_guidance(double alpha, double beta, double budget) {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0))
        throw ValueError("lambda_c_guidance: need 0 < alpha < 1 and beta > 0");
    if (!(budget > 0.0))
        throw ValueError("lambda_c_guidance: budget must be positive");
    LambdaCGuidance g;
    g.alpha = alpha;
    g.beta = beta;
    g.per_voxel_factor = (1.0 - alpha) * beta;
    g.budget = budget;
    g.recommended_lambda_c = budget / g.per_voxel_factor;
    return g;
}

double loyalty_bound(const LambdaCGuidance& g, double lambda_c) {
    return lambda_c * g.per_voxel_factor;
}

bool lambda_c_is_loose(const LambdaCGuidance& g, double lambda_c) {
    return loyalty_bound(g, lambda_c) > g.budget;
}

LoyaltyBounds loyalty_bounds(double alpha, double beta, double lambda_c, int64_t voxels) {
    LoyaltyBounds b;
    b.per_voxel_per_direction = lambda_c * (1.0 - alpha) * beta;
    b.per_total = b.per_voxel_per_direction * static_cast<double>(voxels);
    b.full = 2.0 * b.per_total;
    return b;
}

AlphaBeta estimate_alpha_beta(std::span<const DisplacementField> samples,
                              DisplacementKind kind) {
    if (samples.empty())
        throw ValueError("estimate_alpha_beta: need at least one sample field");
    double max_mag = 0.0;
    for (const DisplacementField& f : samples) {
        const int n = f.ndim();
        for (int64_t v = 0; v < f.shape.voxel_count(); ++v) {
            double m2 = 0.0;
            for (int c = 0; c < n; ++c)
                m2 += f.comp(c, v) * f.comp(c, v);
            max_mag = std::max(max_mag, m2);
        }
    }
    max_mag = std::sqrt(max_mag);
    AlphaBeta out;
    out.beta = 0.15 * max_mag;
    if (out.beta <= 0.0)
        throw ValueError("estimate_alpha_beta: degenerate samples give beta = 0");
    out.alpha = kind == DisplacementKind::kAbsolute ? 0.1 : 0.01;
    return out;
}

RatioBoundResult check_ratio_bound(const DisplacementField& g_ab,
                                   const DisplacementField& g_tilde_ba, double alpha) {
    require_same_shape(g_ab.shape, g_tilde_ba.shape, "check_ratio_bound");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ValueError("check_ratio_bound: need 0 < alpha < 1");
    const double threshold = 2.0 / (1.0 - alpha);
    const int n = g_ab.ndim();
    const int64_t voxels = g_ab.shape.voxel_count();
    RatioBoundResult out;
    out.satisfied.assign(static_cast<size_t>(voxels), 0);
    out.evaluated.assign(static_cast<size_t>(voxels), 0);
    for (int64_t v = 0; v < voxels; ++v) {
        bool any = false, all_ok = true;
        for (int c = 0; c < n; ++c) {
            const double x = g_ab.comp(c, v);
            const double y = g_tilde_ba.comp(c, v);
            if (std::abs(x) < 1e-8 || std::abs(y) < 1e-8 || x * y > 0.0)
                continue;
            any = true;
            if (!(x / y + y / x < threshold))
                all_ok = false;
        }
        if (any) {
            out.evaluated[static_cast<size_t>(v)] = 1;
            ++out.evaluated_count;
            if (all_ok) {
                out.satisfied[static_cast<size_t>(v)] = 1;
                ++out.satisfied_count;
            }
        }
    }
    out.satisfied_fraction =
        out.evaluated_count == 0
            ? 1.0
            : static_cast<double>(out.satisfied_count) / static_cast<double>(out.evaluated_count);
    return out;
}

BudgetReport check_budget_condition(std::span<const DisplacementField> fields, double budget,
                                    double alpha, double beta, int64_t voxels) {
    if (!(budget > 0.0))
        throw ValueError("check_budget_condition: budget must be positive");
    BudgetReport out;
    out.budget = budget;
    out.fields_within_budget = true;
    for (const DisplacementField& f : fields) {
        const double norm = sum_squared(f);
        out.field_norms.push_back(norm);
        if (norm > budget)
            out.fields_within_budget = false;
    }
    out.admissibility_lhs = 2.0 * alpha * budget + beta * static_cast<double>(voxels);
    out.admissible = out.admissibility_lhs < budget;
    return out;
}

// ---------------------------------------------------------------------------
// Rejection samplers
// ---------------------------------------------------------------------------

namespace {

DisplacementField smooth_noise_field(const GridShape& shape, double sigma, double max_magnitude,
                                     detail::Rng& rng) {
    const int n = shape.ndim();
    DisplacementField f(shape);
    std::vector<double> scratch(static_cast<size_t>(shape.voxel_count()));
    for (int c = 0; c < n; ++c) {
        double* plane = f.plane(c);
        for (int64_t v = 0; v < shape.voxel_count(); ++v)
            plane[v] = rng.normal();
        detail::gaussian_smooth_inplace(plane, scratch.data(), shape.dims(), sigma);
    }
    double max_m2 = 0.0;
    for (int64_t v = 0; v < shape.voxel_count(); ++v) {
        double m2 = 0.0;
        for (int c = 0; c < n; ++c)
            m2 += f.comp(c, v) * f.comp(c, v);
        max_m2 = std::max(max_m2, m2);
    }
    if (max_m2 > 0.0) {
        const double scale = max_magnitude / std::sqrt(max_m2);
        for (double& x : f.components)
            x *= scale;
    }
    return f;
}

} // namespace

SampledPair sample_satisfying_pair(const GridShape& shape, const SanityConfig& cfg,
                                   uint64_t seed) {
    cfg.validate();
    detail::Rng rng(seed);
    const double amplitude = rng.uniform(0.1, 2.0) * std::sqrt(cfg.beta);
    const DisplacementField g = smooth_noise_field(shape, 1.5, amplitude, rng);
    DisplacementField noise = smooth_noise_field(shape, 1.5, 1.0, rng);

    double eps = 0.5 * std::sqrt(cfg.beta);
    for (int attempt = 0; attempt < 60; ++attempt, eps *= 0.5) {
        SampledPair pair{g, g};
        for (size_t i = 0; i < pair.g_tilde.components.size(); ++i)
            pair.g_tilde.components[i] = -g.components[i] + eps * noise.components[i];
        if (first_precondition_violation(pair.g, pair.g_tilde, cfg) < 0)
            return pair;
    }
    SampledPair pair{g, g};
    for (double& x : pair.g_tilde.components)
        x = -x;
    return pair;
}

SampledDirectionalPair sample_satisfying_directional_pair(const GridShape& shape,
                                                          const SanityConfig& cfg,
                                                          uint64_t seed) {
    cfg.validate();
    detail::Rng rng(seed);
    const DisplacementField base = smooth_noise_field(shape, 1.5, 1.0, rng);
    const DisplacementField noise = smooth_noise_field(shape, 1.5, 1.0, rng);

    double amplitude = rng.uniform(0.2, 1.0) * std::min(1.0, std::sqrt(cfg.beta));
    double eps = 0.25 * amplitude;
    for (int attempt = 0; attempt < 80; ++attempt) {
        SampledDirectionalPair pair{base, base};
        for (size_t i = 0; i < base.components.size(); ++i) {
            pair.g_mf.components[i] = amplitude * base.components[i];
            pair.g_fm.components[i] =
                -amplitude * base.components[i] + eps * noise.components[i];
        }
        const DisplacementField bp_fm = back_project(pair.g_mf, pair.g_fm);
        const DisplacementField bp_mf = back_project(pair.g_fm, pair.g_mf);
        if (first_precondition_violation(pair.g_mf, bp_fm, cfg) < 0 &&
            first_precondition_violation(pair.g_fm, bp_mf, cfg) < 0)
            return pair;
        eps *= 0.5;
        if (attempt % 8 == 7)
            amplitude *= 0.5;
    }
    SampledDirectionalPair zero{DisplacementField(shape), DisplacementField(shape)};
    return zero;
}

} // namespace sreg
