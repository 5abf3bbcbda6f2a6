#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "sreg/grid.hpp"

using namespace sreg;
using sreg_test::oracle_bilinear;
using sreg_test::random_field;
using sreg_test::random_image;

TEST_CASE("grid shape invariants") {
    CHECK_THROWS_AS(GridShape({1, 4}), ValueError);
    CHECK_THROWS_AS(GridShape({4}), ValueError);
    CHECK_THROWS_AS(GridShape({2, 2, 2, 2}), ValueError);
    const GridShape s({3, 4, 5});
    CHECK(s.voxel_count() == 60);
    std::array<int64_t, 3> idx{2, 1, 3};
    const int64_t flat = s.flat_index(idx);
    CHECK(flat == 2 * 20 + 1 * 5 + 3);
    std::array<int64_t, 3> back{};
    s.multi_index(flat, back);
    CHECK(back == idx);
}

TEST_CASE("sample_linear constants and hand values") {
    const GridShape s({2, 2});
    ImageVolume constant(s, 3.25);
    for (double x0 : {-1.0, 0.0, 0.3, 1.0, 5.0})
        for (double x1 : {-0.2, 0.5, 2.0}) {
            const std::array<double, 2> p{x0, x1};
            CHECK(sample_linear(constant, p) == 3.25);
        }

    // Row-constant image embeds the 1-D ramp [0, 1].
    ImageVolume ramp(s);
    ramp.values = {0.0, 1.0, 0.0, 1.0};
    const std::array<double, 2> quarter{0.5, 0.25};
    CHECK(sample_linear(ramp, quarter) == doctest::Approx(0.25).epsilon(1e-15));

    ImageVolume sq(s);
    sq.values = {0.0, 1.0, 2.0, 3.0};
    const std::array<double, 2> mid{0.5, 0.5};
    CHECK(sample_linear(sq, mid) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("sample_linear clamps and stays within the value hull") {
    const GridShape s({5, 7});
    const ImageVolume img = random_image(s, 11);
    double lo = img.values[0], hi = img.values[0];
    for (double v : img.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    detail::Rng rng(12);
    for (int i = 0; i < 500; ++i) {
        const std::array<double, 2> p{rng.uniform(-3.0, 8.0), rng.uniform(-3.0, 10.0)};
        const double v = sample_linear(img, p);
        CHECK(v >= lo);
        CHECK(v <= hi);
    }
    // Far outside: exact corner values.
    const std::array<double, 2> below{-10.0, -10.0};
    CHECK(sample_linear(img, below) == img.values.front());
}

TEST_CASE("sample_linear reproduces affine images at interior points") {
    const GridShape s({6, 9});
    ImageVolume img(s);
    for (int64_t i = 0; i < 6; ++i)
        for (int64_t j = 0; j < 9; ++j)
            img.values[static_cast<size_t>(i * 9 + j)] =
                0.75 + 1.5 * static_cast<double>(i) - 0.3 * static_cast<double>(j);
    detail::Rng rng(13);
    for (int k = 0; k < 200; ++k) {
        const double x0 = rng.uniform(0.0, 5.0);
        const double x1 = rng.uniform(0.0, 8.0);
        const std::array<double, 2> p{x0, x1};
        CHECK(sample_linear(img, p) ==
              doctest::Approx(0.75 + 1.5 * x0 - 0.3 * x1).epsilon(1e-12));
    }
}

TEST_CASE("warp_image identity and hand-shift") {
    const GridShape s({2, 4});
    ImageVolume img(s);
    img.values = {0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 2.0, 3.0};
    const DisplacementField zero(s);
    CHECK(warp_image(img, zero).values == img.values);

    DisplacementField shift(s);
    for (int64_t v = 0; v < s.voxel_count(); ++v)
        shift.comp(1, v) = 1.0; // +1 along the fast axis, clamped at the end
    const ImageVolume out = warp_image(img, shift);
    const std::vector<double> expected{1.0, 2.0, 3.0, 3.0, 1.0, 2.0, 3.0, 3.0};
    CHECK(out.values == expected);

    ImageVolume mismatch(GridShape({3, 3}));
    CHECK_THROWS_AS(warp_image(mismatch, shift), ShapeError);
}

TEST_CASE("warp_image checkerboard half-voxel shift averages the cell") {
    const GridShape s({6, 6});
    ImageVolume board(s);
    for (int64_t i = 0; i < 6; ++i)
        for (int64_t j = 0; j < 6; ++j)
            board.values[static_cast<size_t>(i * 6 + j)] = static_cast<double>((i + j) % 2);
    DisplacementField half(s);
    for (int64_t v = 0; v < s.voxel_count(); ++v) {
        half.comp(0, v) = 0.5;
        half.comp(1, v) = 0.5;
    }
    const ImageVolume out = warp_image(board, half);
    for (int64_t i = 0; i < 5; ++i)
        for (int64_t j = 0; j < 5; ++j) {
            const double mean = (board.values[static_cast<size_t>(i * 6 + j)] +
                                 board.values[static_cast<size_t>(i * 6 + j + 1)] +
                                 board.values[static_cast<size_t>((i + 1) * 6 + j)] +
                                 board.values[static_cast<size_t>((i + 1) * 6 + j + 1)]) /
                                4.0;
            CHECK(out.values[static_cast<size_t>(i * 6 + j)] ==
                  doctest::Approx(mean).epsilon(1e-15));
        }
}

TEST_CASE("back_project basics") {
    const GridShape s({4, 4});
    const DisplacementField zero(s);
    const DisplacementField g_ba = random_field(s, 21, 0.8);
    const DisplacementField bp = back_project(zero, g_ba);
    CHECK(bp.components == g_ba.components);

    DisplacementField plus(s), minus(s);
    for (int64_t v = 0; v < s.voxel_count(); ++v) {
        plus.comp(0, v) = 0.7;
        plus.comp(1, v) = -0.2;
        minus.comp(0, v) = -0.7;
        minus.comp(1, v) = 0.2;
    }
    const DisplacementField tilde = back_project(plus, minus);
    for (int64_t v = 0; v < s.voxel_count(); ++v) {
        CHECK(tilde.comp(0, v) == doctest::Approx(-0.7).epsilon(1e-15));
        CHECK(tilde.comp(1, v) == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(plus.comp(0, v) + tilde.comp(0, v) == doctest::Approx(0.0));
        CHECK(plus.comp(1, v) + tilde.comp(1, v) == doctest::Approx(0.0));
    }
}

TEST_CASE("back_project matches the scalar oracle on random pairs") {
    const GridShape s({4, 4});
    const DisplacementField g_ab = random_field(s, 31, 0.9);
    const DisplacementField g_ba = random_field(s, 32, 0.9);
    const DisplacementField bp = back_project(g_ab, g_ba);
    for (int64_t i = 0; i < 4; ++i)
        for (int64_t j = 0; j < 4; ++j) {
            const int64_t v = i * 4 + j;
            const double x0 = static_cast<double>(i) + g_ab.comp(0, v);
            const double x1 = static_cast<double>(j) + g_ab.comp(1, v);
            for (int c = 0; c < 2; ++c) {
                ImageVolume plane(s);
                for (int64_t w = 0; w < 16; ++w)
                    plane.values[static_cast<size_t>(w)] = g_ba.comp(c, w);
                CHECK(bp.comp(c, v) == oracle_bilinear(plane, x0, x1));
            }
        }
}

TEST_CASE("jacobian determinants: identity, scaling, fold") {
    const GridShape s({8, 8});
    const DisplacementField zero(s);
    for (double det : jacobian_determinants(zero).values)
        CHECK(det == 1.0);

    // Uniform scaling u(p) = (s-1) p; one-sided boundary stencils keep the
    // affine determinant exact everywhere.
    const double scale = 1.3;
    DisplacementField scaling(s);
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) {
            const int64_t v = i * 8 + j;
            scaling.comp(0, v) = (scale - 1.0) * static_cast<double>(i);
            scaling.comp(1, v) = (scale - 1.0) * static_cast<double>(j);
        }
    for (double det : jacobian_determinants(scaling).values)
        CHECK(det == doctest::Approx(scale * scale).epsilon(1e-10));

    DisplacementField fold(s);
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j)
            fold.comp(0, i * 8 + j) = -2.0 * static_cast<double>(i);
    const ImageVolume dets = jacobian_determinants(fold);
    for (int64_t i = 1; i < 7; ++i)
        for (int64_t j = 0; j < 8; ++j)
            CHECK(dets.values[static_cast<size_t>(i * 8 + j)] ==
                  doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("jacobian determinants: random affine field matches closed form in 3-D") {
    const GridShape s({4, 5, 6});
    const double a[3][3] = {{1.1, 0.2, -0.1}, {0.05, 0.9, 0.15}, {-0.2, 0.1, 1.05}};
    DisplacementField field(s);
    std::array<int64_t, 3> idx{};
    for (int64_t v = 0; v < s.voxel_count(); ++v) {
        s.multi_index(v, idx);
        for (int r = 0; r < 3; ++r) {
            double u = 0.0;
            for (int c = 0; c < 3; ++c)
                u += (a[r][c] - (r == c ? 1.0 : 0.0)) * static_cast<double>(idx[static_cast<size_t>(c)]);
            field.comp(r, v) = u;
        }
    }
    const double expected = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
                            a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
                            a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    for (double det : jacobian_determinants(field).values)
        CHECK(det == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("warp_labels keeps labels discrete and rounds sub-half shifts away") {
    const GridShape s({6, 6});
    LabelVolume labels(s);
    for (int64_t i = 2; i < 5; ++i)
        for (int64_t j = 2; j < 5; ++j)
            labels.at(i * 6 + j) = 3;
    DisplacementField shift(s);
    for (int64_t v = 0; v < s.voxel_count(); ++v) {
        shift.comp(0, v) = 0.4;
        shift.comp(1, v) = -0.4;
    }
    CHECK(warp_labels(labels, shift).labels == labels.labels);
}

TEST_CASE("landmark validation rejects out-of-bounds points") {
    const GridShape s({4, 4});
    LandmarkSet lm;
    lm.moving.push_back(Vec{{1.0, 1.0, 0.0}});
    lm.fixed.push_back(Vec{{2.0, 3.5, 0.0}});
    CHECK_THROWS_AS(validate_landmarks(lm, s), ValueError);
    lm.fixed[0][1] = 3.0;
    CHECK_NOTHROW(validate_landmarks(lm, s));
}
