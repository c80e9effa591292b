#pragma once

#include "leafae/graph.hpp"

// Differentiable primitives over Var. Binary elementwise ops accept equal
// shapes, or a rank-0 operand broadcast against a tensor. Every other
// mismatch is a ShapeError.
namespace leafae::ops {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);

template <typename T> Var<T> scale(Var<T> a, T factor);
template <typename T> Var<T> add_constant(Var<T> a, T offset);
template <typename T> Var<T> square(Var<T> a);
template <typename T> Var<T> exp(Var<T> a);

template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);

template <typename T> Var<T> relu(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);

/// [M,K] x [K,N] -> [M,N].
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);

/// Adds bias [C] along axis 1 of x [N,C,...], or axis 0 when x is [C] or [C,H,W]
/// with `channel_axis` = 0.
template <typename T> Var<T> add_channel_bias(Var<T> x, Var<T> bias, std::size_t channel_axis);

template <typename T> Var<T> reshape(Var<T> a, Shape shape);

/// Identity in the forward pass; blocks all gradient flow.
template <typename T> Var<T> stop_gradient(Var<T> a);

/// Forward value is `quantized`; the incoming gradient is handed unchanged to
/// `encoded` and nothing reaches `quantized`.
template <typename T> Var<T> straight_through(Var<T> encoded, Var<T> quantized);

}  // namespace leafae::ops

namespace leafae {

template <typename T> Var<T> operator+(Var<T> a, Var<T> b) { return ops::add(a, b); }
template <typename T> Var<T> operator-(Var<T> a, Var<T> b) { return ops::sub(a, b); }
template <typename T> Var<T> operator*(Var<T> a, Var<T> b) { return ops::mul(a, b); }

}  // namespace leafae
