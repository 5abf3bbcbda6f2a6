#include "sreg/registrator.hpp"

#include <algorithm>
#include <cmath>

#include "sreg/detail/rng.hpp"
#include "sreg/loss_graph.hpp"

namespace sreg {

using ad::NodeId;
using ad::Parameter;
using ad::Tape;
using ad::Tensor;

namespace {

// Gradient entries below rounding scale are treated as exact zeros so that
// analytically stationary points (identical-pair registration at zero
// fields) stay fixed; Adam's scale-free update would otherwise amplify
// 1e-17 cancellation noise into learning-rate-sized steps.
constexpr double kGradientNoiseFloor = 1e-13;

void flush_gradient_noise(ad::Tensor& grad) {
    for (double& g : grad.data)
        if (std::abs(g) < kGradientNoiseFloor)
            g = 0.0;
}

} // namespace

void Adam::step(std::span<ad::Parameter*> params) {
    if (m_.empty()) {
        for (const Parameter* p : params) {
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        for (size_t i = 0; i < p.value.data.size(); ++i) {
            const double g = p.grad.data[i];
            double& m = m_[k].data[i];
            double& v = v_[k].data[i];
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
            v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
            p.value.data[i] -=
                cfg_.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg_.epsilon);
        }
    }
}

ImageVolume normalize01(const ImageVolume& img) {
    double lo = img.values.empty() ? 0.0 : img.values[0];
    double hi = lo;
    for (double x : img.values) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    ImageVolume out(img.shape);
    if (hi - lo < 1e-12)
        return out;
    const double inv = 1.0 / (hi - lo);
    for (size_t i = 0; i < img.values.size(); ++i)
        out.values[i] = (img.values[i] - lo) * inv;
    return out;
}

// ---------------------------------------------------------------------------
// Direct per-pair optimization
// ---------------------------------------------------------------------------

PairResult register_pair_direct(const ImageVolume& moving, const ImageVolume& fixed,
                                const SanityConfig& cfg, const DirectOptions& opt) {
    cfg.validate();
    require_same_shape(moving.shape, fixed.shape, "register_pair_direct");
    if (opt.steps < 1)
        throw ValueError("register_pair_direct: steps must be >= 1");

    const GridShape& shape = moving.shape;
    const int n = shape.ndim();
    std::vector<int64_t> field_shape;
    field_shape.push_back(n);
    for (int64_t d : shape.dims())
        field_shape.push_back(d);

    Parameter p_mf(Tensor::zeros(field_shape));
    Parameter p_fm(Tensor::zeros(field_shape));
    std::vector<Parameter*> params{&p_mf, &p_fm};
    Adam adam(AdamConfig{opt.learning_rate, 0.9, 0.999, 1e-8});

    const Tensor m_t = graph::image_tensor(moving);
    const Tensor f_t = graph::image_tensor(fixed);

    PairResult result;
    result.loss_history.reserve(static_cast<size_t>(opt.steps));
    result.mask_history.reserve(static_cast<size_t>(opt.steps));

    for (int step = 0; step < opt.steps; ++step) {
        Tape tape;
        const NodeId g_mf = tape.variable(p_mf.value);
        const NodeId g_fm = tape.variable(p_fm.value);
        const NodeId m_node = tape.constant(m_t);
        const NodeId f_node = tape.constant(f_t);

        // Back-projections and the frozen masks of this step.
        const NodeId bp_fm = graph::back_project_node(tape, g_mf, g_fm,
                                                      opt.backproject_coord_grad);
        const NodeId bp_mf = graph::back_project_node(tape, g_fm, g_mf,
                                                      opt.backproject_coord_grad);
        const DisplacementField cur_mf = graph::field_from_tensor(tape.value(g_mf), shape);
        const DisplacementField cur_fm = graph::field_from_tensor(tape.value(g_fm), shape);
        const DisplacementField cur_bp_fm = graph::field_from_tensor(tape.value(bp_fm), shape);
        const DisplacementField cur_bp_mf = graph::field_from_tensor(tape.value(bp_mf), shape);
        const ViolationMask mask_mf = cross_sanity_mask(cur_mf, cur_bp_fm, cfg);
        const ViolationMask mask_fm = cross_sanity_mask(cur_fm, cur_bp_mf, cfg);

        const NodeId warped_m = graph::warp_image_node(tape, m_node, g_mf);
        const NodeId warped_f = graph::warp_image_node(tape, f_node, g_fm);
        NodeId sim;
        if (opt.similarity == Similarity::kNcc) {
            sim = tape.mul_const(tape.add(graph::ncc_node(tape, f_node, warped_m, cfg.ncc_window),
                                          graph::ncc_node(tape, m_node, warped_f, cfg.ncc_window)),
                                 -1.0);
        } else {
            sim = tape.add(graph::ssd_node(tape, f_node, warped_m),
                           graph::ssd_node(tape, m_node, warped_f));
        }
        const NodeId reg = tape.add(graph::grad_reg_node(tape, g_mf),
                                    graph::grad_reg_node(tape, g_fm));
        const NodeId cross = tape.mul_const(
            tape.add(graph::cross_sanity_node(tape, g_mf, bp_fm, mask_mf, cfg),
                     graph::cross_sanity_node(tape, g_fm, bp_mf, mask_fm, cfg)),
            0.5);
        const NodeId total = tape.add(tape.add(sim, tape.mul_const(reg, cfg.lambda_r)),
                                      tape.mul_const(cross, cfg.lambda_c));

        LossBreakdown breakdown;
        breakdown.sim = tape.value(sim).data[0];
        breakdown.reg = tape.value(reg).data[0];
        breakdown.self_sanity = 0.0;
        breakdown.cross = tape.value(cross).data[0];
        breakdown.total = tape.value(total).data[0];
        if (!std::isfinite(breakdown.total))
            throw DivergenceError("register_pair_direct: non-finite loss at step " +
                                      std::to_string(step),
                                  step);
        result.loss_history.push_back(breakdown);
        result.mask_history.push_back(
            0.5 * (mask_mf.violator_fraction() + mask_fm.violator_fraction()));

        tape.backward(total);
        p_mf.grad = tape.grad(g_mf);
        p_fm.grad = tape.grad(g_fm);
        flush_gradient_noise(p_mf.grad);
        flush_gradient_noise(p_fm.grad);
        adam.step(params);
    }

    result.g_mf = graph::field_from_tensor(p_mf.value, shape);
    result.g_fm = graph::field_from_tensor(p_fm.value, shape);
    result.g_mm = DisplacementField(shape);
    result.g_ff = DisplacementField(shape);
    return result;
}

// ---------------------------------------------------------------------------
// Tiny convolutional regressor
// ---------------------------------------------------------------------------

TinyNet TinyNet::create(int ndim, uint64_t seed) {
    if (ndim != 2)
        throw ValueError("TinyNet: only 2-D grids are supported");
    detail::Rng rng(seed);
    const int hidden = 16;
    auto init_conv = [&](int64_t cout, int64_t cin) {
        Tensor w = Tensor::zeros({cout, cin, 3, 3});
        const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * 9.0));
        for (double& x : w.data)
            x = rng.uniform(-bound, bound);
        return w;
    };
    TinyNet net{ndim,
                hidden,
                Parameter(init_conv(hidden, 2)),
                Parameter(Tensor::zeros({hidden})),
                Parameter(init_conv(hidden, hidden)),
                Parameter(Tensor::zeros({hidden})),
                Parameter(init_conv(ndim, hidden)),
                Parameter(Tensor::zeros({ndim})),
                Parameter(Tensor::scalar(0.1))};
    return net;
}

std::vector<Parameter*> TinyNet::parameters() {
    return {&w1, &b1, &w2, &b2, &w3, &b3, &gain};
}

std::vector<const Parameter*> TinyNet::parameters() const {
    return {&w1, &b1, &w2, &b2, &w3, &b3, &gain};
}

namespace {

Tensor stack_channels(const ImageVolume& a, const ImageVolume& b) {
    std::vector<int64_t> shape;
    shape.push_back(2);
    for (int64_t d : a.shape.dims())
        shape.push_back(d);
    Tensor t = Tensor::zeros(shape);
    const size_t n = a.values.size();
    std::copy(a.values.begin(), a.values.end(), t.data.begin());
    std::copy(b.values.begin(), b.values.end(), t.data.begin() + static_cast<int64_t>(n));
    return t;
}

// Shared by inference and the tape forward so both round identically.
Tensor net_forward_plain(const TinyNet& net, const Tensor& input) {
    Tensor h = ad::relu_eval(ad::conv2d_eval(input, net.w1.value, net.b1.value));
    h = ad::relu_eval(ad::conv2d_eval(h, net.w2.value, net.b2.value));
    h = ad::conv2d_eval(h, net.w3.value, net.b3.value);
    const double gain = net.gain.value.data[0];
    for (double& x : h.data)
        x *= gain;
    return h;
}

struct NetNodes {
    NodeId w1, b1, w2, b2, w3, b3, gain;
};

NodeId net_forward_tape(Tape& tape, const NetNodes& nn, const Tensor& input) {
    NodeId h = tape.relu(tape.conv2d(tape.constant(input), nn.w1, nn.b1));
    h = tape.relu(tape.conv2d(h, nn.w2, nn.b2));
    h = tape.conv2d(h, nn.w3, nn.b3);
    return tape.scale_by(h, nn.gain);
}

std::vector<Tensor> snapshot(const TinyNet& net) {
    std::vector<Tensor> out;
    for (const Parameter* p : net.parameters())
        out.push_back(p->value);
    return out;
}

void restore(TinyNet& net, const std::vector<Tensor>& snap) {
    auto params = net.parameters();
    for (size_t i = 0; i < params.size(); ++i)
        params[i]->value = snap[i];
}

} // namespace

DisplacementField infer(const TinyNet& net, const ImageVolume& a, const ImageVolume& b) {
    require_same_shape(a.shape, b.shape, "infer");
    if (a.shape.ndim() != net.ndim)
        throw ShapeError("infer: grid dimensionality does not match the model");
    const Tensor out =
        net_forward_plain(net, stack_channels(normalize01(a), normalize01(b)));
    return graph::field_from_tensor(out, a.shape);
}

TrainResult train_model(std::span<const TrainPair> dataset, const SanityConfig& cfg,
                        const TrainOptions& opt) {
    cfg.validate();
    if (dataset.empty())
        throw ValueError("train_model: dataset is empty");
    const GridShape shape = dataset[0].moving.shape;
    for (const TrainPair& p : dataset) {
        require_same_shape(p.moving.shape, shape, "train_model");
        require_same_shape(p.fixed.shape, shape, "train_model");
    }
    const double voxels = static_cast<double>(shape.voxel_count());

    TrainResult result{TinyNet::create(shape.ndim(), opt.seed), {}, std::nullopt};
    TinyNet& net = result.model;
    Adam adam(AdamConfig{opt.learning_rate, 0.9, 0.999, 1e-8});
    detail::Rng order_rng(opt.seed ^ 0x9e3779b97f4a7c15ull);

    // Model inputs are normalized once up front.
    std::vector<ImageVolume> norm_m, norm_f;
    norm_m.reserve(dataset.size());
    norm_f.reserve(dataset.size());
    for (const TrainPair& p : dataset) {
        norm_m.push_back(normalize01(p.moving));
        norm_f.push_back(normalize01(p.fixed));
    }

    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    long global_step = 0;
    std::vector<Tensor> last_good = snapshot(net);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        if (opt.shuffle)
            order_rng.shuffle(order);
        EpochLog log;
        log.epoch = epoch;
        for (size_t oi = 0; oi < order.size(); ++oi, ++global_step) {
            const ImageVolume& m_img = norm_m[order[oi]];
            const ImageVolume& f_img = norm_f[order[oi]];

            Tape tape;
            auto params = net.parameters();
            NetNodes nn{tape.variable(net.w1.value),   tape.variable(net.b1.value),
                        tape.variable(net.w2.value),   tape.variable(net.b2.value),
                        tape.variable(net.w3.value),   tape.variable(net.b3.value),
                        tape.variable(net.gain.value)};
            const std::vector<NodeId> param_nodes{nn.w1, nn.b1, nn.w2, nn.b2,
                                                  nn.w3, nn.b3, nn.gain};

            const NodeId g_mf = net_forward_tape(tape, nn, stack_channels(m_img, f_img));
            const NodeId g_fm = net_forward_tape(tape, nn, stack_channels(f_img, m_img));
            const NodeId g_mm = net_forward_tape(tape, nn, stack_channels(m_img, m_img));
            const NodeId g_ff = net_forward_tape(tape, nn, stack_channels(f_img, f_img));

            const NodeId bp_fm =
                graph::back_project_node(tape, g_mf, g_fm, opt.backproject_coord_grad);
            const NodeId bp_mf =
                graph::back_project_node(tape, g_fm, g_mf, opt.backproject_coord_grad);
            const DisplacementField cur_mf = graph::field_from_tensor(tape.value(g_mf), shape);
            const DisplacementField cur_fm = graph::field_from_tensor(tape.value(g_fm), shape);
            const ViolationMask mask_mf = cross_sanity_mask(
                cur_mf, graph::field_from_tensor(tape.value(bp_fm), shape), cfg);
            const ViolationMask mask_fm = cross_sanity_mask(
                cur_fm, graph::field_from_tensor(tape.value(bp_mf), shape), cfg);

            const NodeId m_node = tape.constant(graph::image_tensor(m_img));
            const NodeId f_node = tape.constant(graph::image_tensor(f_img));
            const NodeId sim = tape.mul_const(
                tape.add(graph::ncc_node(tape, f_node,
                                         graph::warp_image_node(tape, m_node, g_mf),
                                         cfg.ncc_window),
                         graph::ncc_node(tape, m_node,
                                         graph::warp_image_node(tape, f_node, g_fm),
                                         cfg.ncc_window)),
                -1.0);
            const NodeId reg =
                tape.add(graph::grad_reg_node(tape, g_mf), graph::grad_reg_node(tape, g_fm));
            // The sanity terms enter the model objective per voxel (i.e. as
            // the SSE/CSE metrics): the default weights pair with an O(1)
            // similarity, and the raw sums would crush the shared output
            // gain before registration can be learned.
            const NodeId self_term =
                tape.mul_const(graph::self_sanity_node(tape, g_mm, g_ff), 1.0 / voxels);
            const NodeId cross = tape.mul_const(
                tape.add(graph::cross_sanity_node(tape, g_mf, bp_fm, mask_mf, cfg),
                         graph::cross_sanity_node(tape, g_fm, bp_mf, mask_fm, cfg)),
                0.5 / voxels);
            const NodeId total =
                tape.add(tape.add(tape.add(sim, tape.mul_const(reg, cfg.lambda_r)),
                                  tape.mul_const(self_term, cfg.lambda_s)),
                         tape.mul_const(cross, cfg.lambda_c));

            const double total_v = tape.value(total).data[0];
            if (!std::isfinite(total_v)) {
                restore(net, last_good);
                result.diverged_at_step = global_step;
                result.log.push_back(log);
                return result;
            }
            last_good = snapshot(net);

            log.loss.sim += tape.value(sim).data[0];
            log.loss.reg += tape.value(reg).data[0];
            log.loss.self_sanity += tape.value(self_term).data[0];
            log.loss.cross += tape.value(cross).data[0];
            log.loss.total += total_v;
            // Per-voxel objective terms coincide with the SSE/CSE metrics.
            log.sse += tape.value(self_term).data[0];
            log.cse += tape.value(cross).data[0];
            log.violator_fraction +=
                0.5 * (mask_mf.violator_fraction() + mask_fm.violator_fraction());

            tape.backward(total);
            for (size_t k = 0; k < params.size(); ++k) {
                params[k]->grad = tape.grad(param_nodes[k]);
                flush_gradient_noise(params[k]->grad);
            }
            adam.step(params);
        }
        const double inv = 1.0 / static_cast<double>(dataset.size());
        log.loss.sim *= inv;
        log.loss.reg *= inv;
        log.loss.self_sanity *= inv;
        log.loss.cross *= inv;
        log.loss.total *= inv;
        log.sse *= inv;
        log.cse *= inv;
        log.violator_fraction *= inv;
        result.log.push_back(log);
    }
    return result;
}

} // namespace sreg
