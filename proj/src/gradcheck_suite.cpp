#include "sreg/gradcheck_suite.hpp"

#include <array>
#include <cmath>

#include "sreg/detail/rng.hpp"
#include "sreg/loss_graph.hpp"
#include "sreg/registrator.hpp"

namespace sreg {

namespace {

using ad::NodeId;
using ad::Tape;
using ad::Tensor;

constexpr int kGrid = 8;
constexpr double kEps = 1e-5;
constexpr double kCoordMargin = 1e-3;  // distance to interpolation-cell kinks
constexpr double kPreactMargin = 1e-4; // distance to ReLU kinks

GridShape grid_shape() { return GridShape({kGrid, kGrid}); }

Tensor random_image(detail::Rng& rng) {
    Tensor t = Tensor::zeros({kGrid, kGrid});
    for (double& x : t.data)
        x = rng.uniform();
    return t;
}

Tensor random_field(detail::Rng& rng, double amplitude) {
    Tensor t = Tensor::zeros({2, kGrid, kGrid});
    for (double& x : t.data)
        x = rng.uniform(-amplitude, amplitude);
    return t;
}

// Sampling coordinates p + u must stay clear of every integer lattice
// plane, where the interpolant changes slope.
bool coords_clear_of_kinks(const Tensor& field) {
    const int64_t voxels = kGrid * kGrid;
    for (int c = 0; c < 2; ++c)
        for (int64_t v = 0; v < voxels; ++v) {
            const int64_t p = c == 0 ? v / kGrid : v % kGrid;
            const double x = static_cast<double>(p) + field.data[static_cast<size_t>(c * voxels + v)];
            if (std::abs(x - std::round(x)) < kCoordMargin)
                return false;
        }
    return true;
}

Tensor kink_free_field(detail::Rng& rng, double amplitude) {
    for (;;) {
        Tensor t = random_field(rng, amplitude);
        if (coords_clear_of_kinks(t))
            return t;
    }
}

// Worst relative error with per-input entry subsampling (0 = all entries).
double grad_check_sampled(const std::function<NodeId(Tape&, std::span<const NodeId>)>& build,
                          std::span<const Tensor> inputs, double epsilon,
                          int64_t max_entries_per_input, detail::Rng& rng) {
    Tape tape;
    std::vector<NodeId> ids;
    for (const Tensor& t : inputs)
        ids.push_back(tape.variable(t));
    const NodeId loss = build(tape, ids);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (NodeId id : ids)
        analytic.push_back(tape.grad(id));

    std::vector<Tensor> work(inputs.begin(), inputs.end());
    auto eval = [&]() {
        Tape t2;
        std::vector<NodeId> ids2;
        for (const Tensor& t : work)
            ids2.push_back(t2.variable(t));
        return t2.value(build(t2, ids2)).data[0];
    };

    double worst = 0.0;
    for (size_t k = 0; k < work.size(); ++k) {
        const int64_t total = work[k].size();
        std::vector<int64_t> entries;
        if (max_entries_per_input <= 0 || total <= max_entries_per_input) {
            for (int64_t e = 0; e < total; ++e)
                entries.push_back(e);
        } else {
            for (int64_t i = 0; i < max_entries_per_input; ++i)
                entries.push_back(rng.below(total));
        }
        for (int64_t e : entries) {
            const auto u = static_cast<size_t>(e);
            const double saved = work[k].data[u];
            work[k].data[u] = saved + epsilon;
            const double fp = eval();
            work[k].data[u] = saved - epsilon;
            const double fm = eval();
            work[k].data[u] = saved;
            const double fd = (fp - fm) / (2.0 * epsilon);
            const double adv = analytic[k].data[u];
            const double denom = std::max(1e-8, std::max(std::abs(adv), std::abs(fd)));
            worst = std::max(worst, std::abs(adv - fd) / denom);
        }
    }
    return worst;
}

// TinyNet instance whose hidden pre-activations stay clear of the ReLU
// kink for the given input.
bool net_clear_of_kinks(const TinyNet& net, const Tensor& input) {
    const Tensor pre1 = ad::conv2d_eval(input, net.w1.value, net.b1.value);
    for (double x : pre1.data)
        if (std::abs(x) < kPreactMargin)
            return false;
    const Tensor pre2 = ad::conv2d_eval(ad::relu_eval(pre1), net.w2.value, net.b2.value);
    for (double x : pre2.data)
        if (std::abs(x) < kPreactMargin)
            return false;
    return true;
}

} // namespace

std::vector<GradCheckCase> run_gradcheck_suite(int seeds, uint64_t base_seed) {
    std::vector<GradCheckCase> cases{
        {"ncc", 0.0, 1e-4, false},          {"ssd", 0.0, 1e-4, false},
        {"grad_reg", 0.0, 1e-4, false},     {"self_sanity", 0.0, 1e-4, false},
        {"cross_sanity", 0.0, 1e-4, false}, {"ncc_of_warp", 0.0, 1e-4, false},
        {"tinynet", 0.0, 1e-4, false},
    };
    GradCheckCase& c_ncc = cases[0];
    GradCheckCase& c_ssd = cases[1];
    GradCheckCase& c_reg = cases[2];
    GradCheckCase& c_self = cases[3];
    GradCheckCase& c_cross = cases[4];
    GradCheckCase& c_warp = cases[5];
    GradCheckCase& c_net = cases[6];

    const GridShape shape = grid_shape();
    SanityConfig cfg;
    cfg.alpha = 0.1;
    cfg.beta = 0.5;
    cfg.ncc_window = 5;

    for (int s = 0; s < seeds; ++s) {
        detail::Rng rng(base_seed + static_cast<uint64_t>(s));
        const Tensor img_a = random_image(rng);
        const Tensor img_b = random_image(rng);
        const Tensor field_a = kink_free_field(rng, 1.3);
        const Tensor field_b = kink_free_field(rng, 1.3);

        {
            const std::array<Tensor, 2> inputs{img_a, img_b};
            c_ncc.max_rel_error = std::max(
                c_ncc.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        return graph::ncc_node(t, in[0], in[1], cfg.ncc_window);
                    },
                    inputs, kEps, 0, rng));
            c_ssd.max_rel_error = std::max(
                c_ssd.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        return graph::ssd_node(t, in[0], in[1]);
                    },
                    inputs, kEps, 0, rng));
        }
        {
            const std::array<Tensor, 1> inputs{field_a};
            c_reg.max_rel_error = std::max(
                c_reg.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        return graph::grad_reg_node(t, in[0]);
                    },
                    inputs, kEps, 0, rng));
        }
        {
            const std::array<Tensor, 2> inputs{field_a, field_b};
            c_self.max_rel_error = std::max(
                c_self.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        return graph::self_sanity_node(t, in[0], in[1]);
                    },
                    inputs, kEps, 0, rng));
        }
        {
            // Mask frozen from the unperturbed pair; the back-projection
            // keeps full coordinate gradients so the tape covers the whole
            // chain.
            const DisplacementField g_ab = graph::field_from_tensor(field_a, shape);
            const DisplacementField g_ba = graph::field_from_tensor(field_b, shape);
            const ViolationMask mask = cross_sanity_mask(g_ab, back_project(g_ab, g_ba), cfg);
            const std::array<Tensor, 2> inputs{field_a, field_b};
            c_cross.max_rel_error = std::max(
                c_cross.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        const NodeId bp = graph::back_project_node(t, in[0], in[1],
                                                                   /*coord_grad=*/true);
                        return graph::cross_sanity_node(t, in[0], bp, mask, cfg);
                    },
                    inputs, kEps, 0, rng));
        }
        {
            const std::array<Tensor, 1> inputs{field_a};
            c_warp.max_rel_error = std::max(
                c_warp.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        const NodeId m_node = t.constant(img_a);
                        const NodeId f_node = t.constant(img_b);
                        const NodeId warped = graph::warp_image_node(t, m_node, in[0]);
                        return t.mul_const(graph::ncc_node(t, f_node, warped, cfg.ncc_window),
                                           -1.0);
                    },
                    inputs, kEps, 0, rng));
        }
        {
            TinyNet net = TinyNet::create(2, base_seed + 7000 + static_cast<uint64_t>(s));
            Tensor input = Tensor::zeros({2, kGrid, kGrid});
            std::copy(img_a.data.begin(), img_a.data.end(), input.data.begin());
            std::copy(img_b.data.begin(), img_b.data.end(), input.data.begin() + kGrid * kGrid);
            uint64_t bump = 1;
            while (!net_clear_of_kinks(net, input))
                net = TinyNet::create(2, base_seed + 7000 + static_cast<uint64_t>(s) +
                                             900000ull * bump++);
            std::vector<Tensor> inputs;
            for (const ad::Parameter* p : static_cast<const TinyNet&>(net).parameters())
                inputs.push_back(p->value);
            c_net.max_rel_error = std::max(
                c_net.max_rel_error,
                grad_check_sampled(
                    [&](Tape& t, std::span<const NodeId> in) {
                        NodeId h = t.relu(t.conv2d(t.constant(input), in[0], in[1]));
                        h = t.relu(t.conv2d(h, in[2], in[3]));
                        h = t.conv2d(h, in[4], in[5]);
                        h = t.scale_by(h, in[6]);
                        // Mean keeps the loss O(1e-2) so finite-difference
                        // roundoff stays below the 1e-8 denominator floor
                        // even for near-zero gradient entries.
                        return t.mean(t.mul(h, h));
                    },
                    inputs, kEps, 25, rng));
        }
    }
    for (GradCheckCase& c : cases)
        c.pass = c.max_rel_error < c.threshold;
    return cases;
}

bool all_pass(const std::vector<GradCheckCase>& cases) {
    for (const GradCheckCase& c : cases)
        if (!c.pass)
            return false;
    return true;
}

} // namespace sreg
