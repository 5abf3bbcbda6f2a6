#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "sreg/autodiff.hpp"
#include "sreg/detail/rng.hpp"

using namespace sreg::ad;
using sreg::detail::Rng;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
    Rng rng(seed);
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& x : t.data)
        x = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("add and relu adjoint rules") {
    Tape tape;
    const NodeId x = tape.variable(Tensor({3}, {1.0, -2.0, 0.5}));
    const NodeId y = tape.variable(Tensor({3}, {0.25, 4.0, -1.0}));
    const NodeId loss = tape.sum(tape.add(x, y));
    tape.backward(loss);
    for (double g : tape.grad(x).data)
        CHECK(g == 1.0);
    for (double g : tape.grad(y).data)
        CHECK(g == 1.0);

    Tape t2;
    const NodeId z = t2.variable(Tensor({3}, {1.5, -0.5, 2.0}));
    const NodeId l2 = t2.sum(t2.relu(z));
    t2.backward(l2);
    CHECK(t2.grad(z).data == std::vector<double>{1.0, 0.0, 1.0});
}

TEST_CASE("quadratic gradients") {
    Tape tape;
    const Tensor v({4}, {1.0, -3.0, 2.0, 0.5});
    const NodeId x = tape.variable(v);
    const NodeId loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    for (size_t i = 0; i < 4; ++i)
        CHECK(tape.grad(x).data[i] == doctest::Approx(2.0 * v.data[i]));
}

TEST_CASE("backward requires a scalar and is repeatable") {
    Tape tape;
    const NodeId x = tape.variable(random_tensor({4, 4}, 5));
    const NodeId y = tape.mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), sreg::ValueError);
    const NodeId loss = tape.mean(y);
    tape.backward(loss);
    const std::vector<double> first = tape.grad(x).data;
    tape.backward(loss);
    CHECK(tape.grad(x).data == first);
}

TEST_CASE("conv2d matches a direct-convolution oracle on a 5x5 input") {
    const Tensor input = random_tensor({2, 5, 5}, 31);
    const Tensor weight = random_tensor({3, 2, 3, 3}, 32);
    const Tensor bias = random_tensor({3}, 33);
    const Tensor out = conv2d_eval(input, weight, bias);
    REQUIRE(out.shape == std::vector<int64_t>{3, 5, 5});
    for (int64_t co = 0; co < 3; ++co)
        for (int64_t y = 0; y < 5; ++y)
            for (int64_t x = 0; x < 5; ++x) {
                double acc = bias.data[static_cast<size_t>(co)];
                for (int64_t ci = 0; ci < 2; ++ci)
                    for (int64_t dy = -1; dy <= 1; ++dy)
                        for (int64_t dx = -1; dx <= 1; ++dx) {
                            const int64_t iy = y + dy, ix = x + dx;
                            if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5)
                                continue;
                            acc += input.data[static_cast<size_t>((ci * 5 + iy) * 5 + ix)] *
                                   weight.data[static_cast<size_t>(
                                       ((co * 2 + ci) * 3 + dy + 1) * 3 + dx + 1)];
                        }
                CHECK(out.data[static_cast<size_t>((co * 5 + y) * 5 + x)] ==
                      doctest::Approx(acc).epsilon(1e-13));
            }
}

TEST_CASE("conv2d gradients match finite differences") {
    const std::array<Tensor, 3> inputs{random_tensor({2, 4, 4}, 41), random_tensor({2, 2, 3, 3}, 42),
                                       random_tensor({2}, 43)};
    const double err = grad_check(
        [](Tape& t, std::span<const NodeId> in) {
            const NodeId c = t.conv2d(in[0], in[1], in[2]);
            return t.sum(t.mul(c, c));
        },
        inputs, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("box_sum truncates at the boundary and is self-adjoint") {
    Tape tape;
    const NodeId x = tape.variable(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    const NodeId b = tape.box_sum(x, {3, 3});
    // Every window is clipped to the 2x3 grid.
    const std::vector<double> expected{1 + 2 + 4 + 5,         1 + 2 + 3 + 4 + 5 + 6,
                                       2 + 3 + 5 + 6,         1 + 2 + 4 + 5,
                                       1 + 2 + 3 + 4 + 5 + 6, 2 + 3 + 5 + 6};
    for (size_t i = 0; i < 6; ++i)
        CHECK(tape.value(b).data[i] == doctest::Approx(expected[i]));

    const std::array<Tensor, 1> inputs{random_tensor({4, 5}, 51)};
    const double err = grad_check(
        [](Tape& t, std::span<const NodeId> in) {
            const NodeId s = t.box_sum(in[0], {3, 5});
            return t.sum(t.mul(s, s));
        },
        inputs, 1e-5);
    CHECK(err < 1e-7);
}

TEST_CASE("forward_diff values and adjoint") {
    Tape tape;
    const NodeId x = tape.variable(Tensor({3}, {0.0, 1.0, 3.0}));
    const NodeId d = tape.forward_diff(x, 0);
    CHECK(tape.value(d).data == std::vector<double>{1.0, 2.0, 0.0});

    const std::array<Tensor, 1> inputs{random_tensor({2, 4, 3}, 61)};
    const double err = grad_check(
        [](Tape& t, std::span<const NodeId> in) {
            const NodeId d1 = t.forward_diff(in[0], 1);
            const NodeId d2 = t.forward_diff(in[0], 2);
            return t.add(t.sum(t.mul(d1, d1)), t.sum(t.mul(d2, d2)));
        },
        inputs, 1e-5);
    CHECK(err < 1e-7);
}

TEST_CASE("warp adjoint w.r.t. source is the transposed interpolation matrix") {
    // On a tiny grid, materialize the interpolation operator row by row and
    // compare against the warp backward.
    const int64_t h = 3, w = 3, n = h * w;
    const Tensor disp = random_tensor({2, h, w}, 71, -0.9, 0.9);

    // Dense forward matrix A: out = A * src.
    std::vector<double> a_mat(static_cast<size_t>(n * n), 0.0);
    for (int64_t v = 0; v < n; ++v) {
        for (int64_t s = 0; s < n; ++s) {
            Tensor basis = Tensor::zeros({h, w});
            basis.data[static_cast<size_t>(s)] = 1.0;
            Tape t;
            const NodeId src = t.constant(basis);
            const NodeId d = t.constant(disp);
            const NodeId out = t.warp(src, d, false);
            a_mat[static_cast<size_t>(v * n + s)] = t.value(out).data[static_cast<size_t>(v)];
        }
    }
    // Backward of sum(c . out) gives A^T c for arbitrary cotangent c.
    const Tensor cot = random_tensor({h, w}, 72);
    Tape t;
    const NodeId src = t.variable(random_tensor({h, w}, 73));
    const NodeId out = t.warp(src, t.constant(disp), false);
    const NodeId loss = t.sum(t.mul(out, t.constant(cot)));
    t.backward(loss);
    for (int64_t s = 0; s < n; ++s) {
        double expect = 0.0;
        for (int64_t v = 0; v < n; ++v)
            expect += a_mat[static_cast<size_t>(v * n + s)] * cot.data[static_cast<size_t>(v)];
        CHECK(t.grad(src).data[static_cast<size_t>(s)] ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("warp coordinate gradients match finite differences away from kinks") {
    // Displacements chosen clear of integer lattice coordinates.
    Tensor disp = Tensor::zeros({2, 3, 3});
    Rng rng(81);
    for (double& x : disp.data)
        x = 0.3 + 0.2 * rng.uniform();
    const Tensor src = random_tensor({3, 3}, 82);
    const std::array<Tensor, 1> inputs{disp};
    const double err = grad_check(
        [&](Tape& t, std::span<const NodeId> in) {
            const NodeId out = t.warp(t.constant(src), in[0], true);
            return t.sum(t.mul(out, out));
        },
        inputs, 1e-6);
    CHECK(err < 1e-6);
}

TEST_CASE("warp in 3-D matches trilinear hand evaluation") {
    const int64_t d = 3;
    const Tensor src = random_tensor({d, d, d}, 91);
    Tensor disp = Tensor::zeros({3, d, d, d});
    disp.data[0] = 0.5; // x0 of voxel (0,0,0)
    disp.data[static_cast<size_t>(27 + 0)] = 0.25;
    disp.data[static_cast<size_t>(54 + 0)] = 0.75;
    Tape t;
    const NodeId out = t.warp(t.constant(src), t.constant(disp), false);
    auto at = [&](int64_t i, int64_t j, int64_t k) {
        return src.data[static_cast<size_t>((i * d + j) * d + k)];
    };
    // Trilinear at (0.5, 0.25, 0.75).
    auto lerp = [](double a, double b, double f) { return a * (1 - f) + b * f; };
    double v00 = lerp(at(0, 0, 0), at(0, 0, 1), 0.75);
    double v01 = lerp(at(0, 1, 0), at(0, 1, 1), 0.75);
    double v10 = lerp(at(1, 0, 0), at(1, 0, 1), 0.75);
    double v11 = lerp(at(1, 1, 0), at(1, 1, 1), 0.75);
    const double expect = lerp(lerp(v00, v01, 0.25), lerp(v10, v11, 0.25), 0.5);
    CHECK(t.value(out).data[0] == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("grad_check on a quadratic form is tight") {
    const std::array<Tensor, 1> inputs{random_tensor({5}, 101)};
    const double err = grad_check(
        [](Tape& t, std::span<const NodeId> in) {
            return t.sum(t.mul(in[0], in[0]));
        },
        inputs, 1e-5);
    CHECK(err < 1e-9);
}

TEST_CASE("scale_by propagates to both factors") {
    const std::array<Tensor, 2> inputs{random_tensor({6}, 111), random_tensor({1}, 112)};
    const double err = grad_check(
        [](Tape& t, std::span<const NodeId> in) {
            const NodeId s = t.scale_by(in[0], in[1]);
            return t.sum(t.mul(s, s));
        },
        inputs, 1e-5);
    CHECK(err < 1e-7);
}

TEST_CASE("division and max_const gradients") {
    Rng rng(121);
    Tensor a = Tensor::zeros({8});
    Tensor b = Tensor::zeros({8});
    for (double& x : a.data)
        x = rng.uniform(0.5, 2.0);
    for (double& x : b.data)
        x = rng.uniform(0.5, 2.0);
    const std::array<Tensor, 2> inputs{a, b};
    const double err = grad_check(
        [](Tape& t, std::span<const NodeId> in) {
            const NodeId q = t.div(in[0], t.max_const(in[1], 0.25));
            return t.sum(t.mul(q, q));
        },
        inputs, 1e-6);
    CHECK(err < 1e-6);
}
