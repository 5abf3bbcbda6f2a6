#pragma once

#include "sreg/autodiff.hpp"
#include "sreg/grid.hpp"
#include "sreg/losses.hpp"

// Tape compositions of the loss terms. Plain evaluations in losses.hpp are
// the reference; these builders must agree with them in forward value,
// which the test suite checks.

namespace sreg::graph {

using ad::NodeId;
using ad::Tape;
using ad::Tensor;

Tensor image_tensor(const ImageVolume& img);
Tensor field_tensor(const DisplacementField& field);
Tensor mask_tensor(const ViolationMask& mask);
DisplacementField field_from_tensor(const Tensor& t, const GridShape& shape);
ImageVolume image_from_tensor(const Tensor& t, const GridShape& shape);

// Windowed squared local correlation, averaged over voxels.
NodeId ncc_node(Tape& tape, NodeId a, NodeId b, int window);

NodeId ssd_node(Tape& tape, NodeId a, NodeId b);

// Mean squared forward difference over every axis and component.
NodeId grad_reg_node(Tape& tape, NodeId field);

NodeId self_sanity_node(Tape& tape, NodeId g_mm, NodeId g_ff);

// g~^{b->a}(p) = g^{b->a}(p + g^{a->b}(p)); the sampled source always
// receives gradient, the inner coordinates only if coord_grad is set.
NodeId back_project_node(Tape& tape, NodeId g_ab, NodeId g_ba, bool coord_grad);

// Masked single-direction cross-sanity loss with the mask frozen as a
// constant.
NodeId cross_sanity_node(Tape& tape, NodeId g_ab, NodeId g_tilde_ba, const ViolationMask& mask,
                         const SanityConfig& cfg);

// Warp an image node by a field node (gradient flows into the field).
NodeId warp_image_node(Tape& tape, NodeId image, NodeId field);

} // namespace sreg::graph
