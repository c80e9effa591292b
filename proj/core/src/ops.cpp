#include "leafae/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "kernels.hpp"

namespace leafae {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape " + to_string(a) + " vs " + to_string(b));
  }
}

}  // namespace leafae

namespace leafae::ops {
namespace {

enum class Broadcast { none, left_scalar, right_scalar };

Broadcast classify(const Shape& a, const Shape& b, const char* what) {
  if (a == b) return Broadcast::none;
  if (a.empty()) return Broadcast::left_scalar;
  if (b.empty()) return Broadcast::right_scalar;
  throw ShapeError(std::string(what) + ": cannot broadcast " + to_string(a) + " with " +
                   to_string(b));
}

// Reduces `g` (shape of the broadcast result) into a scalar gradient slot or
// adds it elementwise, depending on whether that operand was broadcast.
template <typename T>
void accumulate_into(Tensor<T>* slot, const Tensor<T>& g, bool was_scalar) {
  if (!slot) return;
  if (was_scalar) {
    T total{0};
    for (T v : g.data()) total += v;
    (*slot)[0] += total;
  } else {
    auto dst = slot->data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, Broadcast mode, F f) {
  const Shape& shape = mode == Broadcast::left_scalar ? b.shape() : a.shape();
  Tensor<T> out(shape);
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    T x = mode == Broadcast::left_scalar ? a[0] : a[i];
    T y = mode == Broadcast::right_scalar ? b[0] : b[i];
    o[i] = f(x, y);
  }
  return out;
}

template <typename T, typename F>
Var<T> unary(std::string_view kind, Var<T> a, F f, BackwardFn<T> backward) {
  const Tensor<T>& x = a.value();
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return a.graph().apply(kind, {a.id()}, std::move(out), std::move(backward));
}

template <typename T>
void check_same_graph(const Var<T>& a, const Var<T>& b) {
  if (&a.graph() != &b.graph()) throw ContractViolation("operands live in different graphs");
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  check_same_graph(a, b);
  const Broadcast mode = classify(a.shape(), b.shape(), "add");
  Tensor<T> out = zip(a.value(), b.value(), mode, [](T x, T y) { return x + y; });
  return a.graph().apply("add", {a.id(), b.id()}, std::move(out),
                         [mode](const BackwardContext<T>& ctx) {
                           accumulate_into(ctx.grad_inputs[0], ctx.grad_output,
                                           mode == Broadcast::left_scalar);
                           accumulate_into(ctx.grad_inputs[1], ctx.grad_output,
                                           mode == Broadcast::right_scalar);
                         });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  check_same_graph(a, b);
  const Broadcast mode = classify(a.shape(), b.shape(), "sub");
  Tensor<T> out = zip(a.value(), b.value(), mode, [](T x, T y) { return x - y; });
  return a.graph().apply("sub", {a.id(), b.id()}, std::move(out),
                         [mode](const BackwardContext<T>& ctx) {
                           accumulate_into(ctx.grad_inputs[0], ctx.grad_output,
                                           mode == Broadcast::left_scalar);
                           if (ctx.grad_inputs[1]) {
                             Tensor<T> neg = ctx.grad_output;
                             for (T& v : neg.data()) v = -v;
                             accumulate_into(ctx.grad_inputs[1], neg,
                                             mode == Broadcast::right_scalar);
                           }
                         });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  check_same_graph(a, b);
  const Broadcast mode = classify(a.shape(), b.shape(), "mul");
  Tensor<T> out = zip(a.value(), b.value(), mode, [](T x, T y) { return x * y; });
  return a.graph().apply(
      "mul", {a.id(), b.id()}, std::move(out), [mode](const BackwardContext<T>& ctx) {
        const Tensor<T>& x = *ctx.inputs[0];
        const Tensor<T>& y = *ctx.inputs[1];
        const Tensor<T>& g = ctx.grad_output;
        if (ctx.grad_inputs[0]) {
          Tensor<T> gx = zip(g, y, mode == Broadcast::right_scalar ? Broadcast::right_scalar
                                                                  : Broadcast::none,
                             [](T u, T v) { return u * v; });
          accumulate_into(ctx.grad_inputs[0], gx, mode == Broadcast::left_scalar);
        }
        if (ctx.grad_inputs[1]) {
          Tensor<T> gy = zip(g, x, mode == Broadcast::left_scalar ? Broadcast::right_scalar
                                                                 : Broadcast::none,
                             [](T u, T v) { return u * v; });
          accumulate_into(ctx.grad_inputs[1], gy, mode == Broadcast::right_scalar);
        }
      });
}

template <typename T>
Var<T> scale(Var<T> a, T factor) {
  return unary<T>("scale", a, [factor](T x) { return x * factor; },
                  [factor](const BackwardContext<T>& ctx) {
                    auto dst = ctx.grad_inputs[0]->data();
                    auto g = ctx.grad_output.data();
                    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * factor;
                  });
}

template <typename T>
Var<T> add_constant(Var<T> a, T offset) {
  return unary<T>("add_constant", a, [offset](T x) { return x + offset; },
                  [](const BackwardContext<T>& ctx) {
                    accumulate_into(ctx.grad_inputs[0], ctx.grad_output, false);
                  });
}

template <typename T>
Var<T> square(Var<T> a) {
  return unary<T>("square", a, [](T x) { return x * x; }, [](const BackwardContext<T>& ctx) {
    auto dst = ctx.grad_inputs[0]->data();
    auto x = ctx.inputs[0]->data();
    auto g = ctx.grad_output.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += T{2} * x[i] * g[i];
  });
}

template <typename T>
Var<T> exp(Var<T> a) {
  return unary<T>("exp", a, [](T x) { return std::exp(x); }, [](const BackwardContext<T>& ctx) {
    auto dst = ctx.grad_inputs[0]->data();
    auto y = ctx.output.data();
    auto g = ctx.grad_output.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += y[i] * g[i];
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary<T>("relu", a, [](T x) { return x > T{0} ? x : T{0}; },
                  [](const BackwardContext<T>& ctx) {
                    auto dst = ctx.grad_inputs[0]->data();
                    auto x = ctx.inputs[0]->data();
                    auto g = ctx.grad_output.data();
                    for (std::size_t i = 0; i < dst.size(); ++i) {
                      if (x[i] > T{0}) dst[i] += g[i];
                    }
                  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary<T>(
      "sigmoid", a,
      [](T x) {
        // Split by sign so exp never overflows; clamp keeps the open interval
        // (0,1) when the result would round to an endpoint.
        T y;
        if (x >= T{0}) {
          y = T{1} / (T{1} + std::exp(-x));
        } else {
          const T e = std::exp(x);
          y = e / (T{1} + e);
        }
        constexpr T lo = std::numeric_limits<T>::min();
        constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / T{2};
        return std::clamp(y, lo, hi);
      },
      [](const BackwardContext<T>& ctx) {
        auto dst = ctx.grad_inputs[0]->data();
        auto y = ctx.output.data();
        auto g = ctx.grad_output.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i] * y[i] * (T{1} - y[i]);
      });
}

template <typename T>
Var<T> sum(Var<T> a) {
  const Tensor<T>& x = a.value();
  T total{0};
  for (T v : x.data()) total += v;
  return a.graph().apply("sum", {a.id()}, Tensor<T>::scalar(total),
                         [](const BackwardContext<T>& ctx) {
                           const T g = ctx.grad_output[0];
                           for (T& v : ctx.grad_inputs[0]->data()) v += g;
                         });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const Tensor<T>& x = a.value();
  const T n = static_cast<T>(x.size());
  T total{0};
  for (T v : x.data()) total += v;
  return a.graph().apply("mean", {a.id()}, Tensor<T>::scalar(total / n),
                         [n](const BackwardContext<T>& ctx) {
                           const T g = ctx.grad_output[0] / n;
                           for (T& v : ctx.grad_inputs[0]->data()) v += g;
                         });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  check_same_graph(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: " + to_string(sa) + " x " + to_string(sb));
  }
  const std::size_t m = sa[0], k = sa[1], n = sb[1];
  Tensor<T> out(Shape{m, n});
  kernels::gemm_nn<T>(m, n, k, a.value().data().data(), b.value().data().data(),
                      out.data().data());
  return a.graph().apply("matmul", {a.id(), b.id()}, std::move(out),
                         [m, k, n](const BackwardContext<T>& ctx) {
                           const T* g = ctx.grad_output.data().data();
                           if (ctx.grad_inputs[0]) {
                             // dA += G * B^T
                             kernels::gemm_nt<T>(m, k, n, g, ctx.inputs[1]->data().data(),
                                                 ctx.grad_inputs[0]->data().data());
                           }
                           if (ctx.grad_inputs[1]) {
                             // dB += A^T * G
                             kernels::gemm_tn<T>(k, n, m, ctx.inputs[0]->data().data(), g,
                                                 ctx.grad_inputs[1]->data().data());
                           }
                         });
}

template <typename T>
Var<T> add_channel_bias(Var<T> x, Var<T> bias, std::size_t channel_axis) {
  check_same_graph(x, bias);
  const Shape& s = x.shape();
  if (channel_axis >= s.size() || bias.shape() != Shape{s[channel_axis]}) {
    throw ShapeError("add_channel_bias: bias " + to_string(bias.shape()) + " vs input " +
                     to_string(s) + " on axis " + std::to_string(channel_axis));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < channel_axis; ++i) outer *= s[i];
  for (std::size_t i = channel_axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t channels = s[channel_axis];

  Tensor<T> out = x.value();
  const Tensor<T>& b = bias.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      T* row = out.data().data() + (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) row[i] += b[c];
    }
  }
  return x.graph().apply("add_channel_bias", {x.id(), bias.id()}, std::move(out),
                         [outer, channels, inner](const BackwardContext<T>& ctx) {
                           accumulate_into(ctx.grad_inputs[0], ctx.grad_output, false);
                           if (Tensor<T>* gb = ctx.grad_inputs[1]) {
                             const T* g = ctx.grad_output.data().data();
                             for (std::size_t o = 0; o < outer; ++o) {
                               for (std::size_t c = 0; c < channels; ++c) {
                                 const T* row = g + (o * channels + c) * inner;
                                 T acc{0};
                                 for (std::size_t i = 0; i < inner; ++i) acc += row[i];
                                 (*gb)[c] += acc;
                               }
                             }
                           }
                         });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.graph().apply("reshape", {a.id()}, std::move(out), [](const BackwardContext<T>& ctx) {
    auto dst = ctx.grad_inputs[0]->data();
    auto g = ctx.grad_output.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  });
}

template <typename T>
Var<T> stop_gradient(Var<T> a) {
  // No inputs recorded: the result is a constant as far as backward goes.
  return a.graph().constant(a.value());
}

template <typename T>
Var<T> straight_through(Var<T> encoded, Var<T> quantized) {
  check_same_graph(encoded, quantized);
  require_same_shape(encoded.shape(), quantized.shape(), "straight_through");
  return encoded.graph().apply("straight_through", {encoded.id()}, quantized.value(),
                               [](const BackwardContext<T>& ctx) {
                                 accumulate_into(ctx.grad_inputs[0], ctx.grad_output, false);
                               });
}

#define LEAFAE_INSTANTIATE_OPS(T)                                       \
  template Var<T> add(Var<T>, Var<T>);                                  \
  template Var<T> sub(Var<T>, Var<T>);                                  \
  template Var<T> mul(Var<T>, Var<T>);                                  \
  template Var<T> scale(Var<T>, T);                                     \
  template Var<T> add_constant(Var<T>, T);                              \
  template Var<T> square(Var<T>);                                       \
  template Var<T> exp(Var<T>);                                          \
  template Var<T> sum(Var<T>);                                          \
  template Var<T> mean(Var<T>);                                         \
  template Var<T> relu(Var<T>);                                         \
  template Var<T> sigmoid(Var<T>);                                      \
  template Var<T> matmul(Var<T>, Var<T>);                               \
  template Var<T> add_channel_bias(Var<T>, Var<T>, std::size_t);        \
  template Var<T> reshape(Var<T>, Shape);                               \
  template Var<T> stop_gradient(Var<T>);                                \
  template Var<T> straight_through(Var<T>, Var<T>);

LEAFAE_INSTANTIATE_OPS(float)
LEAFAE_INSTANTIATE_OPS(double)

}  // namespace leafae::ops
