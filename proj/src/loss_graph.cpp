#include "sreg/loss_graph.hpp"

#include "sreg/detail/boxsum.hpp"

namespace sreg::graph {

Tensor image_tensor(const ImageVolume& img) {
    return Tensor(img.shape.dims(), img.values);
}

Tensor field_tensor(const DisplacementField& field) {
    std::vector<int64_t> shape;
    shape.push_back(field.ndim());
    for (int64_t d : field.shape.dims())
        shape.push_back(d);
    return Tensor(std::move(shape), field.components);
}

Tensor mask_tensor(const ViolationMask& mask) {
    Tensor t = Tensor::zeros(mask.shape.dims());
    for (size_t i = 0; i < mask.bits.size(); ++i)
        t.data[i] = mask.bits[i] ? 1.0 : 0.0;
    return t;
}

DisplacementField field_from_tensor(const Tensor& t, const GridShape& shape) {
    DisplacementField f(shape);
    if (t.size() != static_cast<int64_t>(f.components.size()))
        throw ShapeError("field_from_tensor: size mismatch");
    f.components = t.data;
    return f;
}

ImageVolume image_from_tensor(const Tensor& t, const GridShape& shape) {
    ImageVolume img(shape);
    if (t.size() != shape.voxel_count())
        throw ShapeError("image_from_tensor: size mismatch");
    img.values = t.data;
    return img;
}

NodeId ncc_node(Tape& tape, NodeId a, NodeId b, int window) {
    const std::vector<int64_t> shape = tape.value(a).shape;
    if (!tape.value(a).same_shape(tape.value(b)))
        throw ShapeError("ncc_node: image shapes differ");
    if (window < 1 || window % 2 == 0)
        throw ValueError("ncc_node: window must be odd and positive");
    const std::vector<int64_t> win(shape.size(), static_cast<int64_t>(window));

    // Per-voxel window population is a constant of the geometry.
    Tensor cnt_t = Tensor::full(shape, 1.0);
    Tensor scratch = Tensor::zeros(shape);
    detail::box_sum_inplace(cnt_t.data.data(), scratch.data.data(), shape, win);
    const NodeId cnt = tape.constant(std::move(cnt_t));

    const NodeId sa = tape.box_sum(a, win);
    const NodeId sb = tape.box_sum(b, win);
    const NodeId saa = tape.box_sum(tape.mul(a, a), win);
    const NodeId sbb = tape.box_sum(tape.mul(b, b), win);
    const NodeId sab = tape.box_sum(tape.mul(a, b), win);

    const NodeId cross = tape.sub(sab, tape.div(tape.mul(sa, sb), cnt));
    const NodeId var_a = tape.sub(saa, tape.div(tape.mul(sa, sa), cnt));
    const NodeId var_b = tape.sub(sbb, tape.div(tape.mul(sb, sb), cnt));
    const NodeId denom = tape.mul(tape.max_const(var_a, 1e-5), tape.max_const(var_b, 1e-5));
    return tape.mean(tape.div(tape.mul(cross, cross), denom));
}

NodeId ssd_node(Tape& tape, NodeId a, NodeId b) {
    const NodeId d = tape.sub(a, b);
    return tape.sum(tape.mul(d, d));
}

NodeId grad_reg_node(Tape& tape, NodeId field) {
    // Recording nodes may reallocate the tape, so copy the metadata first.
    const std::vector<int64_t> shape = tape.value(field).shape;
    const int64_t size = tape.value(field).size();
    if (shape.size() < 3)
        throw ShapeError("grad_reg_node: expected [n,spatial...]");
    const int spatial = static_cast<int>(shape.size()) - 1;
    NodeId acc = -1;
    int64_t terms = 0;
    for (int a = 0; a < spatial; ++a) {
        const NodeId d = tape.forward_diff(field, a + 1);
        const NodeId sq = tape.sum(tape.mul(d, d));
        acc = (acc < 0) ? sq : tape.add(acc, sq);
        const int64_t extent = shape[static_cast<size_t>(a) + 1];
        terms += size / extent * (extent - 1);
    }
    return tape.mul_const(acc, 1.0 / static_cast<double>(terms));
}

NodeId self_sanity_node(Tape& tape, NodeId g_mm, NodeId g_ff) {
    const NodeId s = tape.add(tape.sum(tape.mul(g_mm, g_mm)), tape.sum(tape.mul(g_ff, g_ff)));
    return tape.mul_const(s, 0.5);
}

NodeId back_project_node(Tape& tape, NodeId g_ab, NodeId g_ba, bool coord_grad) {
    return tape.warp(g_ba, g_ab, coord_grad);
}

NodeId cross_sanity_node(Tape& tape, NodeId g_ab, NodeId g_tilde_ba, const ViolationMask& mask,
                         const SanityConfig& cfg) {
    const Tensor m = mask_tensor(mask);
    const double violators = static_cast<double>(mask.violator_count());
    const NodeId s = tape.add(g_ab, g_tilde_ba);
    const NodeId t1 = tape.sum(tape.mask_mul(tape.mul(s, s), m));
    const NodeId t2 = tape.sum(tape.mask_mul(tape.mul(g_ab, g_ab), m));
    const NodeId t3 = tape.sum(tape.mask_mul(tape.mul(g_tilde_ba, g_tilde_ba), m));
    const NodeId penalty = tape.mul_const(tape.add(t2, t3), cfg.alpha);
    return tape.add_const(tape.sub(t1, penalty), -cfg.beta * violators);
}

NodeId warp_image_node(Tape& tape, NodeId image, NodeId field) {
    return tape.warp(image, field, /*coord_grad=*/true);
}

} // namespace sreg::graph
