"""Smoke tests for the python bindings."""

import numpy as np
import pytest

import sreg


def test_warp_identity():
    img = np.random.default_rng(0).random((8, 8))
    zero = np.zeros((2, 8, 8))
    out = sreg.warp_image(img, zero)
    np.testing.assert_array_equal(out, img)


def test_back_project_constant_translation():
    plus = np.zeros((2, 6, 6))
    plus[0] = 0.5
    minus = -plus
    tilde = sreg.back_project(plus, minus)
    np.testing.assert_allclose(plus + tilde, 0.0, atol=1e-14)


def test_jacobian_of_identity_and_fold():
    zero = np.zeros((2, 8, 8))
    np.testing.assert_array_equal(sreg.jacobian_determinants(zero), 1.0)
    fv, aj, sdlogj = sreg.folding_metrics(zero)
    assert (fv, aj, sdlogj) == (0.0, 0.0, 0.0)


def test_cross_sanity_mask_worked_example():
    g = np.zeros((2, 2, 2))
    gt = np.zeros((2, 2, 2))
    g[0, 0, 0] = 2.0
    gt[0, 0, 0] = 2.0
    mask = sreg.cross_sanity_mask(g, gt, alpha=0.1, beta=0.5)
    assert mask[0, 0] == 1
    assert mask.sum() == 1


def test_ncc_affine_invariance():
    rng = np.random.default_rng(1)
    a = rng.random((8, 8))
    assert sreg.ncc(a, 2.0 * a + 3.0, window=5) == pytest.approx(1.0, abs=1e-9)


def test_dice_hand_count():
    a = np.array([[1, 1], [0, 0]], dtype=np.uint16)
    b = np.array([[0, 1], [1, 0]], dtype=np.uint16)
    assert sreg.dice(a, b) == pytest.approx(0.5)


def test_lambda_c_guidance_worked_value():
    g = sreg.lambda_c_guidance(0.1, 10.0)
    assert g["per_voxel_factor"] == pytest.approx(9.0)


def test_estimate_alpha_beta():
    f = np.zeros((2, 8, 8))
    f[0, 3, 3] = 80.0
    alpha, beta = sreg.estimate_alpha_beta([f], kind="absolute")
    assert alpha == 0.1
    assert beta == pytest.approx(12.0)


def test_relaxation_bound_on_strict_pair():
    g = np.random.default_rng(2).normal(scale=0.3, size=(2, 8, 8))
    report = sreg.verify_relaxation_bound(g, -g, alpha=0.1, beta=10.0)
    assert report["satisfied"]
    assert report["lhs"] == 0.0


def test_direct_registration_runs():
    pair = sreg.make_pair([24, 24], magnitude=1.0, smoothness=4.0, seed=3)
    out = sreg.register_pair_direct(
        pair["moving"], pair["fixed"], beta=0.15, ncc_window=7, steps=10
    )
    assert out["g_mf"].shape == (2, 24, 24)
    assert len(out["loss_history"]) == 10
    assert out["loss_history"][-1] < out["loss_history"][0]


def test_shape_errors_raise():
    img = np.zeros((8, 8))
    bad_field = np.zeros((2, 4, 4))
    with pytest.raises(sreg.SregError):
        sreg.warp_image(img, bad_field)
