#pragma once

#include <cstdint>
#include <random>

#include "leafae/graph.hpp"

namespace leafae::nn {

/// Static description of a 2-D (transposed) convolution. Cross-correlation,
/// no kernel flip.
struct ConvGeometry {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  /// floor((extent + 2*padding - kernel) / stride) + 1; throws if < 1.
  std::size_t conv_output(std::size_t extent, std::size_t kernel) const;
  /// (extent - 1) * stride + kernel - 2*padding; throws if < 1.
  std::size_t transposed_output(std::size_t extent, std::size_t kernel) const;

  /// Padding that keeps spatial extents for stride 1 and odd kernels.
  static ConvGeometry same(std::size_t in, std::size_t out, std::size_t kernel);
};

/// Conv weights are [out, in, kh, kw]. Transposed conv weights are
/// [in, out, kh, kw], i.e. the weight of the convolution it is the adjoint of.
template <typename T>
struct ConvSpec {
  ConvGeometry geometry;
  Tensor<T> weight;
  Tensor<T> bias;

  static ConvSpec zeros(const ConvGeometry& g, bool transposed = false);
};

template <typename T>
struct DenseSpec {
  std::size_t in_features = 1;
  std::size_t out_features = 1;
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  static DenseSpec zeros(std::size_t in, std::size_t out);
};

enum class Activation { identity, relu, sigmoid };

/// Fan-in scaled uniform init U(-sqrt(6/fan_in), +sqrt(6/fan_in)); bias zeroed.
template <typename T>
void init_he_uniform(Tensor<T>& weight, Tensor<T>& bias, std::size_t fan_in, std::mt19937_64& rng);

// Spatial layers take x as [C,H,W] or batched [N,C,H,W] and return the same rank.

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding);
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::size_t stride, std::size_t padding);
/// Binds the spec's tensors as constants of x's graph.
template <typename T>
Var<T> conv2d(Var<T> x, const ConvSpec<T>& spec);

template <typename T>
Var<T> transposed_conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride,
                         std::size_t padding);
template <typename T>
Var<T> transposed_conv2d(Var<T> x, Var<T> weight, std::size_t stride, std::size_t padding);
template <typename T>
Var<T> transposed_conv2d(Var<T> x, const ConvSpec<T>& spec);

/// Non-overlapping max pooling (window must equal stride and divide H, W).
/// Ties route the gradient to the first maximal entry in row-major order.
template <typename T>
Var<T> max_pool2d(Var<T> x, std::size_t window, std::size_t stride);

template <typename T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor);

/// y = W x + b for x [in] or batched [N, in].
template <typename T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias);
template <typename T>
Var<T> dense(Var<T> x, const DenseSpec<T>& spec);

template <typename T>
Var<T> apply_activation(Var<T> x, Activation kind);

/// [N,C,H,W] -> [N, C*H*W];  [C,H,W] -> [C*H*W].
template <typename T>
Var<T> flatten(Var<T> x);

}  // namespace leafae::nn
