#pragma once

#include <cstdint>

#include "dualfete/autograd.hpp"
#include "dualfete/tensor.hpp"

// Differentiable primitives. Every op records itself on the tape of its
// tracked inputs; shape errors raise ContractViolation naming the op.
namespace dualfete::autograd {

// x: (B, Ci, H, W), weight: (Co, Ci, K, K), bias: (Co). Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride, std::size_t padding);

// Nearest-neighbour 2x upsampling of (B, C, H, W).
Tensor upsample_nearest2x(const Tensor& x);

// Concatenate (B, Ca, H, W) and (B, Cb, H, W) along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Softmax over axis 1 of (B, C, H, W).
Tensor softmax_channels(const Tensor& x);

Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
// Values outside [lo, hi] are clipped and receive zero gradient.
Tensor clamp(const Tensor& x, double lo, double hi);
// log(clamp(x, lo, hi)) whose gradient is that of the unclamped log, so a
// saturated softmax still receives the (p - onehot) cross-entropy gradient.
Tensor clamped_log(const Tensor& x, double lo, double hi);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, double s);
Tensor mul_scalar(const Tensor& x, double s);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Sum of x where mask == 1. The mask is a constant of the same shape.
Tensor masked_sum(const Tensor& x, const Tensor& mask);

// Inverted dropout with its own seeded stream: kept values are divided by
// (1 - rate). rate == 0 is the identity.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed);

}  // namespace dualfete::autograd
