#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sreg/errors.hpp"

namespace sreg::ad {

// Dense row-major tensor of doubles. Rank is arbitrary; registration code
// uses [d0,d1(,d2)] for images, [n,d0,d1(,d2)] for displacement fields and
// [Cout,Cin,kh,kw] for conv kernels.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double fill);
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// A trainable tensor with its accumulated gradient.
struct Parameter {
    Tensor value;
    Tensor grad;

    explicit Parameter(Tensor v) : value(std::move(v)), grad(Tensor::zeros(value.shape)) {}
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

using NodeId = int32_t;

// Reverse-mode tape over the primitive set needed by registration
// training: elementwise arithmetic, convolution, ReLU, multilinear
// sampling (warp), box-window sums, forward differences, reductions.
//
// Forward values are computed eagerly as nodes are recorded. backward()
// recomputes all gradients from scratch, so calling it twice on the same
// forward gives identical results.
class Tape {
  public:
    // Leaves.
    NodeId constant(Tensor v);
    NodeId variable(Tensor v);

    // Elementwise on equal shapes.
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);

    NodeId add_const(NodeId a, double c);
    NodeId mul_const(NodeId a, double c);
    // max(x, c); gradient flows where x > c.
    NodeId max_const(NodeId a, double c);
    NodeId relu(NodeId a);

    // t broadcast-multiplied by a constant per-voxel mask. t is [spatial]
    // or [C,spatial]; mask is [spatial].
    NodeId mask_mul(NodeId t, Tensor mask);

    // Scalar node times tensor node.
    NodeId scale_by(NodeId t, NodeId scalar);

    // Reductions to a 1-element node.
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);

    // Truncated box-window sum over the spatial axes; window holds one odd
    // extent per spatial axis. Contributions outside the grid are dropped.
    NodeId box_sum(NodeId t, std::vector<int64_t> window);

    // out[...,i,...] = t[...,i+1,...] - t[...,i,...]; the final slice along
    // `axis` is zero. `axis` indexes the tensor shape directly.
    NodeId forward_diff(NodeId t, int axis);

    // 2-D convolution, zero-padded to "same": input [Cin,H,W], weight
    // [Cout,Cin,kh,kw] (odd kernel), bias [Cout] -> [Cout,H,W].
    NodeId conv2d(NodeId input, NodeId weight, NodeId bias);

    // Multilinear warp: out[c](p) = src[c](p + disp(p)), sampling clamped
    // to the grid. src is [spatial] or [C,spatial]; disp is [n,spatial].
    // Gradient always flows to src; gradient to the sampling coordinates
    // (disp) only when coord_grad is set.
    NodeId warp(NodeId src, NodeId disp, bool coord_grad);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

    // Gradient of the last backward() target w.r.t. node `id`.
    const Tensor& grad(NodeId id) const;

    void backward(NodeId loss);
    void reset();
    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        std::function<void(Tape&, NodeId)> backprop; // null for leaves
    };

    NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&, NodeId)> fn);
    Tensor& grad_buffer(NodeId id);
    void accumulate(NodeId target, const Tensor& g);

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> grad_ready_;

    friend struct TapeBackdoor;
};

// Compares tape gradients of a scalar-valued builder against central
// finite differences with step `epsilon`. Returns the worst relative
// error over every entry of every input, with the denominator floored at
// 1e-8. Inputs are registered as variables in order.
double grad_check(const std::function<NodeId(Tape&, std::span<const NodeId>)>& build,
                  std::span<const Tensor> inputs, double epsilon);

// Plain (tape-free) evaluations shared with the deterministic inference
// path.
Tensor conv2d_eval(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor relu_eval(const Tensor& t);

} // namespace sreg::ad
