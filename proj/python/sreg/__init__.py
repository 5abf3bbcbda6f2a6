"""Sanity-checked deformable registration toolkit."""

from ._sreg import (
    back_project,
    cice,
    cross_sanity_mask,
    dice,
    estimate_alpha_beta,
    folding_metrics,
    grad_reg,
    jacobian_determinants,
    lambda_c_guidance,
    make_pair,
    ncc,
    register_pair_direct,
    sanity_metrics,
    self_sanity_loss,
    ssd,
    verify_relaxation_bound,
    warp_image,
    warp_labels,
    SregError,
)

__all__ = [
    "back_project",
    "cice",
    "cross_sanity_mask",
    "dice",
    "estimate_alpha_beta",
    "folding_metrics",
    "grad_reg",
    "jacobian_determinants",
    "lambda_c_guidance",
    "make_pair",
    "ncc",
    "register_pair_direct",
    "sanity_metrics",
    "self_sanity_loss",
    "ssd",
    "verify_relaxation_bound",
    "warp_image",
    "warp_labels",
    "SregError",
]
