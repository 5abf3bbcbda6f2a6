#include "sreg/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "sreg/detail/boxsum.hpp"
#include "sreg/detail/interp.hpp"

namespace sreg::ad {

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    int64_t n = 1;
    for (int64_t d : shape)
        n *= d;
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double fill) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.data.begin(), t.data.end(), fill);
    return t;
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": tensor shape mismatch");
}

int64_t product(std::span<const int64_t> dims) {
    int64_t p = 1;
    for (int64_t d : dims)
        p *= d;
    return p;
}

// Splits [C, spatial...] from pure [spatial...] by the declared spatial rank.
struct SpatialView {
    int64_t channels;
    std::vector<int64_t> dims; // spatial extents
    int64_t voxels;
};

SpatialView spatial_view(const Tensor& t, size_t spatial_rank, const char* op) {
    if (t.shape.size() == spatial_rank) {
        std::vector<int64_t> dims(t.shape.begin(), t.shape.end());
        return {1, dims, product(dims)};
    }
    if (t.shape.size() == spatial_rank + 1) {
        std::vector<int64_t> dims(t.shape.begin() + 1, t.shape.end());
        return {t.shape[0], dims, product(dims)};
    }
    throw ShapeError(std::string(op) + ": unexpected tensor rank");
}

} // namespace

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, NodeId)> fn) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(fn)});
    return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

NodeId Tape::variable(Tensor v) { return push(std::move(v), true, nullptr); }

Tensor& Tape::grad_buffer(NodeId id) {
    auto i = static_cast<size_t>(id);
    if (!grad_ready_[i]) {
        grads_[i] = Tensor::zeros(nodes_[i].value.shape);
        grad_ready_[i] = 1;
    }
    return grads_[i];
}

void Tape::accumulate(NodeId target, const Tensor& g) {
    if (!nodes_[static_cast<size_t>(target)].requires_grad)
        return;
    Tensor& buf = grad_buffer(target);
    for (size_t i = 0; i < buf.data.size(); ++i)
        buf.data[i] += g.data[i];
}

const Tensor& Tape::grad(NodeId id) const {
    auto i = static_cast<size_t>(id);
    if (i >= grads_.size() || !grad_ready_[i]) {
        static thread_local Tensor empty;
        empty = Tensor::zeros(nodes_[i].value.shape);
        return empty;
    }
    return grads_[i];
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    grad_ready_.clear();
}

void Tape::backward(NodeId loss) {
    if (value(loss).size() != 1)
        throw ValueError("backward: loss must be a scalar node");
    grads_.assign(nodes_.size(), Tensor{});
    grad_ready_.assign(nodes_.size(), 0);
    if (!nodes_[static_cast<size_t>(loss)].requires_grad)
        return;
    grad_buffer(loss).data[0] = 1.0;
    for (NodeId id = loss; id >= 0; --id) {
        auto i = static_cast<size_t>(id);
        if (grad_ready_[i] && nodes_[i].backprop)
            nodes_[i].backprop(*this, id);
    }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

NodeId Tape::add(NodeId a, NodeId b) {
    require_same(value(a), value(b), "add");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] += vb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

NodeId Tape::sub(NodeId a, NodeId b) {
    require_same(value(a), value(b), "sub");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] -= vb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        t.accumulate(a, g);
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (size_t i = 0; i < gb.data.size(); ++i)
                gb.data[i] -= g.data[i];
        }
    });
}

NodeId Tape::mul(NodeId a, NodeId b) {
    require_same(value(a), value(b), "mul");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] *= vb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            const Tensor& vb2 = t.value(b);
            for (size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += g.data[i] * vb2.data[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            const Tensor& va2 = t.value(a);
            for (size_t i = 0; i < gb.data.size(); ++i)
                gb.data[i] += g.data[i] * va2.data[i];
        }
    });
}

NodeId Tape::div(NodeId a, NodeId b) {
    require_same(value(a), value(b), "div");
    Tensor out = value(a);
    const Tensor& vb = value(b);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] /= vb.data[i];
    bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        const Tensor& va = t.value(a);
        const Tensor& vb2 = t.value(b);
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += g.data[i] / vb2.data[i];
        }
        if (t.requires_grad(b)) {
            Tensor& gb = t.grad_buffer(b);
            for (size_t i = 0; i < gb.data.size(); ++i)
                gb.data[i] -= g.data[i] * va.data[i] / (vb2.data[i] * vb2.data[i]);
        }
    });
}

NodeId Tape::add_const(NodeId a, double c) {
    Tensor out = value(a);
    for (double& x : out.data)
        x += c;
    return push(std::move(out), requires_grad(a), [a](Tape& t, NodeId self) {
        t.accumulate(a, t.grads_[static_cast<size_t>(self)]);
    });
}

NodeId Tape::mul_const(NodeId a, double c) {
    Tensor out = value(a);
    for (double& x : out.data)
        x *= c;
    return push(std::move(out), requires_grad(a), [a, c](Tape& t, NodeId self) {
        if (!t.requires_grad(a))
            return;
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        Tensor& ga = t.grad_buffer(a);
        for (size_t i = 0; i < ga.data.size(); ++i)
            ga.data[i] += c * g.data[i];
    });
}

NodeId Tape::max_const(NodeId a, double c) {
    Tensor out = value(a);
    for (double& x : out.data)
        x = std::max(x, c);
    return push(std::move(out), requires_grad(a), [a, c](Tape& t, NodeId self) {
        if (!t.requires_grad(a))
            return;
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (size_t i = 0; i < ga.data.size(); ++i)
            if (va.data[i] > c)
                ga.data[i] += g.data[i];
    });
}

NodeId Tape::relu(NodeId a) {
    Tensor out = value(a);
    for (double& x : out.data)
        x = std::max(x, 0.0);
    return push(std::move(out), requires_grad(a), [a](Tape& t, NodeId self) {
        if (!t.requires_grad(a))
            return;
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_buffer(a);
        for (size_t i = 0; i < ga.data.size(); ++i)
            if (va.data[i] > 0.0)
                ga.data[i] += g.data[i];
    });
}

NodeId Tape::mask_mul(NodeId a, Tensor mask) {
    const SpatialView view = spatial_view(value(a), mask.shape.size(), "mask_mul");
    if (view.voxels != mask.size())
        throw ShapeError("mask_mul: mask does not match spatial extent");
    Tensor out = value(a);
    for (int64_t c = 0; c < view.channels; ++c)
        for (int64_t v = 0; v < view.voxels; ++v)
            out.data[static_cast<size_t>(c * view.voxels + v)] *= mask.data[static_cast<size_t>(v)];
    int64_t voxels = view.voxels, channels = view.channels;
    return push(std::move(out), requires_grad(a),
                [a, m = std::move(mask), voxels, channels](Tape& t, NodeId self) {
                    if (!t.requires_grad(a))
                        return;
                    const Tensor& g = t.grads_[static_cast<size_t>(self)];
                    Tensor& ga = t.grad_buffer(a);
                    for (int64_t c = 0; c < channels; ++c)
                        for (int64_t v = 0; v < voxels; ++v) {
                            auto i = static_cast<size_t>(c * voxels + v);
                            ga.data[i] += g.data[i] * m.data[static_cast<size_t>(v)];
                        }
                });
}

NodeId Tape::scale_by(NodeId a, NodeId scalar) {
    if (value(scalar).size() != 1)
        throw ShapeError("scale_by: expected a 1-element scale node");
    const double s = value(scalar).data[0];
    Tensor out = value(a);
    for (double& x : out.data)
        x *= s;
    bool rg = requires_grad(a) || requires_grad(scalar);
    return push(std::move(out), rg, [a, scalar](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        const double sv = t.value(scalar).data[0];
        if (t.requires_grad(a)) {
            Tensor& ga = t.grad_buffer(a);
            for (size_t i = 0; i < ga.data.size(); ++i)
                ga.data[i] += sv * g.data[i];
        }
        if (t.requires_grad(scalar)) {
            const Tensor& va = t.value(a);
            double acc = 0.0;
            for (size_t i = 0; i < va.data.size(); ++i)
                acc += g.data[i] * va.data[i];
            t.grad_buffer(scalar).data[0] += acc;
        }
    });
}

NodeId Tape::sum(NodeId a) {
    double acc = 0.0;
    for (double x : value(a).data)
        acc += x;
    return push(Tensor::scalar(acc), requires_grad(a), [a](Tape& t, NodeId self) {
        if (!t.requires_grad(a))
            return;
        const double g = t.grads_[static_cast<size_t>(self)].data[0];
        Tensor& ga = t.grad_buffer(a);
        for (double& x : ga.data)
            x += g;
    });
}

NodeId Tape::mean(NodeId a) {
    const double inv = 1.0 / static_cast<double>(value(a).size());
    double acc = 0.0;
    for (double x : value(a).data)
        acc += x;
    return push(Tensor::scalar(acc * inv), requires_grad(a), [a, inv](Tape& t, NodeId self) {
        if (!t.requires_grad(a))
            return;
        const double g = t.grads_[static_cast<size_t>(self)].data[0] * inv;
        Tensor& ga = t.grad_buffer(a);
        for (double& x : ga.data)
            x += g;
    });
}

// ---------------------------------------------------------------------------
// Box-window sums (separable, truncated at the boundary)
// ---------------------------------------------------------------------------

namespace {

Tensor box_sum_channel_eval(const Tensor& t, const SpatialView& view,
                            std::span<const int64_t> window) {
    Tensor out = t;
    Tensor tmp = Tensor::zeros(t.shape);
    for (int64_t c = 0; c < view.channels; ++c)
        detail::box_sum_inplace(out.data.data() + c * view.voxels,
                                tmp.data.data() + c * view.voxels, view.dims, window);
    return out;
}

} // namespace

NodeId Tape::box_sum(NodeId a, std::vector<int64_t> window) {
    const SpatialView view = spatial_view(value(a), window.size(), "box_sum");
    for (int64_t w : window)
        if (w < 1 || w % 2 == 0)
            throw ValueError("box_sum: window extents must be odd and positive");
    Tensor out = box_sum_channel_eval(value(a), view, window);
    return push(std::move(out), requires_grad(a),
                [a, view, w = std::move(window)](Tape& t, NodeId self) {
                    if (!t.requires_grad(a))
                        return;
                    const Tensor adj =
                        box_sum_channel_eval(t.grads_[static_cast<size_t>(self)], view, w);
                    t.accumulate(a, adj);
                });
}

// ---------------------------------------------------------------------------
// Forward differences along one tensor axis (last slice zero)
// ---------------------------------------------------------------------------

NodeId Tape::forward_diff(NodeId a, int axis) {
    const Tensor& in = value(a);
    if (axis < 0 || static_cast<size_t>(axis) >= in.shape.size())
        throw ValueError("forward_diff: axis out of range");
    const int64_t d = in.shape[static_cast<size_t>(axis)];
    int64_t outer = 1, inner = 1;
    for (int k = 0; k < axis; ++k)
        outer *= in.shape[static_cast<size_t>(k)];
    for (size_t k = static_cast<size_t>(axis) + 1; k < in.shape.size(); ++k)
        inner *= in.shape[k];
    Tensor out = Tensor::zeros(in.shape);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i + 1 < d; ++i) {
            const size_t base = static_cast<size_t>((o * d + i) * inner);
            for (int64_t k = 0; k < inner; ++k)
                out.data[base + static_cast<size_t>(k)] =
                    in.data[base + static_cast<size_t>(inner + k)] -
                    in.data[base + static_cast<size_t>(k)];
        }
    return push(std::move(out), requires_grad(a), [a, d, outer, inner](Tape& t, NodeId self) {
        if (!t.requires_grad(a))
            return;
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        Tensor& ga = t.grad_buffer(a);
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < d; ++i) {
                const size_t base = static_cast<size_t>((o * d + i) * inner);
                for (int64_t k = 0; k < inner; ++k) {
                    double acc = 0.0;
                    if (i > 0)
                        acc += g.data[base - static_cast<size_t>(inner) + static_cast<size_t>(k)];
                    if (i + 1 < d)
                        acc -= g.data[base + static_cast<size_t>(k)];
                    ga.data[base + static_cast<size_t>(k)] += acc;
                }
            }
    });
}

// ---------------------------------------------------------------------------
// 2-D convolution (zero padded, stride 1)
// ---------------------------------------------------------------------------

Tensor conv2d_eval(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    if (input.shape.size() != 3 || weight.shape.size() != 4 || bias.shape.size() != 1)
        throw ShapeError("conv2d: expected input [Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout]");
    const int64_t cin = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int64_t cout = weight.shape[0], kh = weight.shape[2], kw = weight.shape[3];
    if (weight.shape[1] != cin || bias.shape[0] != cout)
        throw ShapeError("conv2d: channel mismatch");
    if (kh % 2 == 0 || kw % 2 == 0)
        throw ValueError("conv2d: kernel extents must be odd");
    const int64_t rh = kh / 2, rw = kw / 2;
    Tensor out = Tensor::zeros({cout, h, w});
    for (int64_t co = 0; co < cout; ++co) {
        double* oc = out.data.data() + co * h * w;
        const double b = bias.data[static_cast<size_t>(co)];
        for (int64_t i = 0; i < h * w; ++i)
            oc[i] = b;
        for (int64_t ci = 0; ci < cin; ++ci) {
            const double* ic = input.data.data() + ci * h * w;
            for (int64_t dy = 0; dy < kh; ++dy) {
                const int64_t oy0 = std::max<int64_t>(0, rh - dy);
                const int64_t oy1 = std::min<int64_t>(h, h + rh - dy);
                for (int64_t dx = 0; dx < kw; ++dx) {
                    const double wv =
                        weight.data[static_cast<size_t>(((co * cin + ci) * kh + dy) * kw + dx)];
                    if (wv == 0.0)
                        continue;
                    const int64_t ox0 = std::max<int64_t>(0, rw - dx);
                    const int64_t ox1 = std::min<int64_t>(w, w + rw - dx);
                    for (int64_t y = oy0; y < oy1; ++y) {
                        const double* irow = ic + (y + dy - rh) * w + (dx - rw);
                        double* orow = oc + y * w;
                        for (int64_t x = ox0; x < ox1; ++x)
                            orow[x] += wv * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

Tensor relu_eval(const Tensor& t) {
    Tensor out = t;
    for (double& x : out.data)
        x = std::max(x, 0.0);
    return out;
}

NodeId Tape::conv2d(NodeId input, NodeId weight, NodeId bias) {
    Tensor out = conv2d_eval(value(input), value(weight), value(bias));
    bool rg = requires_grad(input) || requires_grad(weight) || requires_grad(bias);
    return push(std::move(out), rg, [input, weight, bias](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        const Tensor& in = t.value(input);
        const Tensor& wt = t.value(weight);
        const int64_t cin = in.shape[0], h = in.shape[1], w = in.shape[2];
        const int64_t cout = wt.shape[0], kh = wt.shape[2], kw = wt.shape[3];
        const int64_t rh = kh / 2, rw = kw / 2;
        Tensor* gi = t.requires_grad(input) ? &t.grad_buffer(input) : nullptr;
        Tensor* gw = t.requires_grad(weight) ? &t.grad_buffer(weight) : nullptr;
        Tensor* gb = t.requires_grad(bias) ? &t.grad_buffer(bias) : nullptr;
        for (int64_t co = 0; co < cout; ++co) {
            const double* gc = g.data.data() + co * h * w;
            if (gb) {
                double acc = 0.0;
                for (int64_t i = 0; i < h * w; ++i)
                    acc += gc[i];
                gb->data[static_cast<size_t>(co)] += acc;
            }
            if (!gi && !gw)
                continue;
            for (int64_t ci = 0; ci < cin; ++ci) {
                const double* ic = in.data.data() + ci * h * w;
                double* gic = gi ? gi->data.data() + ci * h * w : nullptr;
                for (int64_t dy = 0; dy < kh; ++dy) {
                    const int64_t oy0 = std::max<int64_t>(0, rh - dy);
                    const int64_t oy1 = std::min<int64_t>(h, h + rh - dy);
                    for (int64_t dx = 0; dx < kw; ++dx) {
                        const size_t widx =
                            static_cast<size_t>(((co * cin + ci) * kh + dy) * kw + dx);
                        const double wv = wt.data[widx];
                        const int64_t ox0 = std::max<int64_t>(0, rw - dx);
                        const int64_t ox1 = std::min<int64_t>(w, w + rw - dx);
                        double wacc = 0.0;
                        for (int64_t y = oy0; y < oy1; ++y) {
                            const double* grow = gc + y * w;
                            const int64_t ishift = (y + dy - rh) * w + (dx - rw);
                            if (gic) {
                                double* girow = gic + ishift;
                                for (int64_t x = ox0; x < ox1; ++x)
                                    girow[x] += wv * grow[x];
                            }
                            if (gw) {
                                const double* irow = ic + ishift;
                                for (int64_t x = ox0; x < ox1; ++x)
                                    wacc += grow[x] * irow[x];
                            }
                        }
                        if (gw)
                            gw->data[widx] += wacc;
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Multilinear warp
// ---------------------------------------------------------------------------

namespace {

struct WarpDims {
    int n;                      // spatial rank
    int64_t channels;
    std::array<int64_t, 3> dim; // spatial extents
    std::array<int64_t, 3> str; // spatial strides
    int64_t voxels;
};

WarpDims warp_dims(const Tensor& src, const Tensor& disp) {
    if (disp.shape.size() < 3 || disp.shape.size() > 4)
        throw ShapeError("warp: displacement must be [n,spatial...]");
    const int n = static_cast<int>(disp.shape.size()) - 1;
    if (disp.shape[0] != n)
        throw ShapeError("warp: displacement component count must match spatial rank");
    WarpDims d{};
    d.n = n;
    d.voxels = 1;
    for (int a = 0; a < n; ++a) {
        d.dim[static_cast<size_t>(a)] = disp.shape[static_cast<size_t>(a) + 1];
        d.voxels *= d.dim[static_cast<size_t>(a)];
    }
    d.str[static_cast<size_t>(n - 1)] = 1;
    for (int a = n - 2; a >= 0; --a)
        d.str[static_cast<size_t>(a)] =
            d.str[static_cast<size_t>(a) + 1] * d.dim[static_cast<size_t>(a) + 1];
    const SpatialView sv = spatial_view(src, static_cast<size_t>(n), "warp");
    for (int a = 0; a < n; ++a)
        if (sv.dims[static_cast<size_t>(a)] != d.dim[static_cast<size_t>(a)])
            throw ShapeError("warp: source and displacement spatial extents differ");
    d.channels = sv.channels;
    return d;
}

} // namespace

NodeId Tape::warp(NodeId src, NodeId disp, bool coord_grad) {
    const WarpDims wd = warp_dims(value(src), value(disp));
    const Tensor& sv = value(src);
    const Tensor& dv = value(disp);
    Tensor out = Tensor::zeros(sv.shape);
    std::array<int64_t, 3> idx{};
    for (int64_t v = 0; v < wd.voxels; ++v) {
        int64_t rem = v;
        for (int a = 0; a < wd.n; ++a) {
            idx[static_cast<size_t>(a)] = rem / wd.str[static_cast<size_t>(a)];
            rem %= wd.str[static_cast<size_t>(a)];
        }
        std::array<detail::AxisCell, 3> cell{};
        for (int a = 0; a < wd.n; ++a) {
            const double x = static_cast<double>(idx[static_cast<size_t>(a)]) +
                             dv.data[static_cast<size_t>(a * wd.voxels + v)];
            cell[static_cast<size_t>(a)] = detail::clamp_cell(x, wd.dim[static_cast<size_t>(a)]);
        }
        for (int64_t c = 0; c < wd.channels; ++c) {
            const double* plane = sv.data.data() + c * wd.voxels;
            out.data[static_cast<size_t>(c * wd.voxels + v)] =
                wd.n == 2 ? detail::lerp2(plane, wd.str[0], cell[0], cell[1])
                          : detail::lerp3(plane, wd.str[0], wd.str[1], cell[0], cell[1], cell[2]);
        }
    }
    bool rg = requires_grad(src) || (coord_grad && requires_grad(disp));
    return push(std::move(out), rg, [src, disp, coord_grad, wd](Tape& t, NodeId self) {
        const Tensor& g = t.grads_[static_cast<size_t>(self)];
        const Tensor& sv2 = t.value(src);
        const Tensor& dv2 = t.value(disp);
        Tensor* gs = t.requires_grad(src) ? &t.grad_buffer(src) : nullptr;
        Tensor* gd = (coord_grad && t.requires_grad(disp)) ? &t.grad_buffer(disp) : nullptr;
        if (!gs && !gd)
            return;
        std::array<int64_t, 3> idx{};
        for (int64_t v = 0; v < wd.voxels; ++v) {
            int64_t rem = v;
            for (int a = 0; a < wd.n; ++a) {
                idx[static_cast<size_t>(a)] = rem / wd.str[static_cast<size_t>(a)];
                rem %= wd.str[static_cast<size_t>(a)];
            }
            std::array<detail::AxisCell, 3> cell{};
            for (int a = 0; a < wd.n; ++a) {
                const double x = static_cast<double>(idx[static_cast<size_t>(a)]) +
                                 dv2.data[static_cast<size_t>(a * wd.voxels + v)];
                cell[static_cast<size_t>(a)] =
                    detail::clamp_cell(x, wd.dim[static_cast<size_t>(a)]);
            }
            for (int64_t c = 0; c < wd.channels; ++c) {
                const double go = g.data[static_cast<size_t>(c * wd.voxels + v)];
                if (go == 0.0)
                    continue;
                const double* plane = sv2.data.data() + c * wd.voxels;
                if (wd.n == 2) {
                    const detail::AxisCell &c0 = cell[0], &c1 = cell[1];
                    const int64_t base = c0.lo * wd.str[0] + c1.lo;
                    const double w00 = (1.0 - c0.frac) * (1.0 - c1.frac);
                    const double w01 = (1.0 - c0.frac) * c1.frac;
                    const double w10 = c0.frac * (1.0 - c1.frac);
                    const double w11 = c0.frac * c1.frac;
                    if (gs) {
                        double* gp = gs->data.data() + c * wd.voxels;
                        gp[base] += go * w00;
                        gp[base + 1] += go * w01;
                        gp[base + wd.str[0]] += go * w10;
                        gp[base + wd.str[0] + 1] += go * w11;
                    }
                    if (gd) {
                        const double v00 = plane[base], v01 = plane[base + 1];
                        const double v10 = plane[base + wd.str[0]],
                                     v11 = plane[base + wd.str[0] + 1];
                        if (c0.interior) {
                            const double d0 = (v10 - v00) * (1.0 - c1.frac) + (v11 - v01) * c1.frac;
                            gd->data[static_cast<size_t>(0 * wd.voxels + v)] += go * d0;
                        }
                        if (c1.interior) {
                            const double d1 = (v01 - v00) * (1.0 - c0.frac) + (v11 - v10) * c0.frac;
                            gd->data[static_cast<size_t>(1 * wd.voxels + v)] += go * d1;
                        }
                    }
                } else {
                    const detail::AxisCell &c0 = cell[0], &c1 = cell[1], &c2 = cell[2];
                    const int64_t base = c0.lo * wd.str[0] + c1.lo * wd.str[1] + c2.lo;
                    const double f0 = c0.frac, f1 = c1.frac, f2 = c2.frac;
                    double corner[2][2][2];
                    for (int i0 = 0; i0 < 2; ++i0)
                        for (int i1 = 0; i1 < 2; ++i1)
                            for (int i2 = 0; i2 < 2; ++i2)
                                corner[i0][i1][i2] =
                                    plane[base + i0 * wd.str[0] + i1 * wd.str[1] + i2];
                    const double u0[2] = {1.0 - f0, f0};
                    const double u1[2] = {1.0 - f1, f1};
                    const double u2[2] = {1.0 - f2, f2};
                    if (gs) {
                        double* gp = gs->data.data() + c * wd.voxels;
                        for (int i0 = 0; i0 < 2; ++i0)
                            for (int i1 = 0; i1 < 2; ++i1)
                                for (int i2 = 0; i2 < 2; ++i2)
                                    gp[base + i0 * wd.str[0] + i1 * wd.str[1] + i2] +=
                                        go * u0[i0] * u1[i1] * u2[i2];
                    }
                    if (gd) {
                        if (c0.interior) {
                            double d0 = 0.0;
                            for (int i1 = 0; i1 < 2; ++i1)
                                for (int i2 = 0; i2 < 2; ++i2)
                                    d0 += (corner[1][i1][i2] - corner[0][i1][i2]) * u1[i1] * u2[i2];
                            gd->data[static_cast<size_t>(0 * wd.voxels + v)] += go * d0;
                        }
                        if (c1.interior) {
                            double d1 = 0.0;
                            for (int i0 = 0; i0 < 2; ++i0)
                                for (int i2 = 0; i2 < 2; ++i2)
                                    d1 += (corner[i0][1][i2] - corner[i0][0][i2]) * u0[i0] * u2[i2];
                            gd->data[static_cast<size_t>(1 * wd.voxels + v)] += go * d1;
                        }
                        if (c2.interior) {
                            double d2 = 0.0;
                            for (int i0 = 0; i0 < 2; ++i0)
                                for (int i1 = 0; i1 < 2; ++i1)
                                    d2 += (corner[i0][i1][1] - corner[i0][i1][0]) * u0[i0] * u1[i1];
                            gd->data[static_cast<size_t>(2 * wd.voxels + v)] += go * d2;
                        }
                    }
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// Finite-difference check
// ---------------------------------------------------------------------------

double grad_check(const std::function<NodeId(Tape&, std::span<const NodeId>)>& build,
                  std::span<const Tensor> inputs, double epsilon) {
    Tape tape;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs)
        ids.push_back(tape.variable(t));
    const NodeId loss = build(tape, ids);
    if (tape.value(loss).size() != 1)
        throw ValueError("grad_check: builder must produce a scalar node");
    tape.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(ids.size());
    for (NodeId id : ids)
        analytic.push_back(tape.grad(id));

    std::vector<Tensor> work(inputs.begin(), inputs.end());
    auto eval = [&]() {
        Tape t2;
        std::vector<NodeId> ids2;
        ids2.reserve(work.size());
        for (const Tensor& t : work)
            ids2.push_back(t2.variable(t));
        return t2.value(build(t2, ids2)).data[0];
    };

    double worst = 0.0;
    for (size_t k = 0; k < work.size(); ++k) {
        for (size_t e = 0; e < work[k].data.size(); ++e) {
            const double saved = work[k].data[e];
            work[k].data[e] = saved + epsilon;
            const double fp = eval();
            work[k].data[e] = saved - epsilon;
            const double fm = eval();
            work[k].data[e] = saved;
            const double fd = (fp - fm) / (2.0 * epsilon);
            const double adv = analytic[k].data[e];
            const double denom = std::max(1e-8, std::max(std::abs(adv), std::abs(fd)));
            worst = std::max(worst, std::abs(adv - fd) / denom);
        }
    }
    return worst;
}

} // namespace sreg::ad
