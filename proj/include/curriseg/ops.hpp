#pragma once

#include "curriseg/tensor.hpp"

namespace curriseg::ops {

// All ops record a graph node only while grad recording is enabled and at
// least one input needs a gradient. Layouts: activations [N,C,D,H,W],
// conv3d weights [C_out,C_in,k,k,k], conv_transpose3d weights [C_in,C_out,k,k,k].

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);
Tensor conv_transpose3d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// 1 − (2·Σ pred·target + smooth)/(Σ pred + Σ target + smooth). Gradient flows
// into pred only; target is treated as constant.
Tensor soft_dice_loss(const Tensor& pred, const Tensor& target, double smooth);

// Mean voxelwise binary cross-entropy on probabilities (not logits); eps
// clamps the logs. Gradient flows into pred only.
Tensor bce_loss(const Tensor& pred, const Tensor& target, double eps = 1e-7);

Tensor sum_all(const Tensor& x);

}  // namespace curriseg::ops
