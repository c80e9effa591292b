#include "leafae/nn.hpp"

#include <cmath>
#include <optional>

#include "kernels.hpp"
#include "leafae/ops.hpp"

namespace leafae::nn {
namespace {

// Upper bound on the size of an unfolded column buffer; batches are processed
// in sample chunks that fit.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct Batched {
  bool had_batch;
  std::size_t n, c, h, w;
};

Batched spatial_dims(const Shape& s, const char* what) {
  if (s.size() == 3) return {false, 1, s[0], s[1], s[2]};
  if (s.size() == 4) return {true, s[0], s[1], s[2], s[3]};
  throw ShapeError(std::string(what) + ": expected [C,H,W] or [N,C,H,W], got " + to_string(s));
}

Shape spatial_shape(const Batched& b, std::size_t c, std::size_t h, std::size_t w) {
  return b.had_batch ? Shape{b.n, c, h, w} : Shape{c, h, w};
}

std::size_t chunk_samples(std::size_t rows, std::size_t positions, std::size_t n) {
  const std::size_t per = std::max<std::size_t>(1, rows * positions);
  return std::clamp<std::size_t>(kColumnBudget / per, 1, n);
}

// [nb, C, P] (starting at sample n0) <-> [C, nb*P]
template <typename T>
void pack_channels(const T* src, std::size_t n0, std::size_t nb, std::size_t c, std::size_t p,
                   T* dst) {
  for (std::size_t s = 0; s < nb; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* from = src + ((n0 + s) * c + ch) * p;
      std::copy(from, from + p, dst + ch * nb * p + s * p);
    }
  }
}

template <typename T>
void unpack_add_channels(const T* src, std::size_t n0, std::size_t nb, std::size_t c,
                         std::size_t p, T* dst) {
  for (std::size_t s = 0; s < nb; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* from = src + ch * nb * p + s * p;
      T* to = dst + ((n0 + s) * c + ch) * p;
      for (std::size_t i = 0; i < p; ++i) to[i] += from[i];
    }
  }
}

template <typename T>
void add_bias_grad(const Tensor<T>& g, std::size_t n, std::size_t c, std::size_t p,
                   Tensor<T>& gb) {
  const T* gd = g.data().data();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* row = gd + (s * c + ch) * p;
      T acc{0};
      for (std::size_t i = 0; i < p; ++i) acc += row[i];
      gb[ch] += acc;
    }
  }
}

template <typename T>
void check_bias(const std::optional<Var<T>>& bias, std::size_t channels, const char* what) {
  if (bias && bias->shape() != Shape{channels}) {
    throw ShapeError(std::string(what) + ": bias shape " + to_string(bias->shape()) +
                     " does not match " + std::to_string(channels) + " channels");
  }
}

template <typename T>
Var<T> conv2d_impl(Var<T> x, Var<T> weight, std::optional<Var<T>> bias, std::size_t stride,
                   std::size_t padding) {
  const Batched in = spatial_dims(x.shape(), "conv2d");
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[1] != in.c) {
    throw ShapeError("conv2d: weight " + to_string(ws) + " incompatible with input " +
                     to_string(x.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const ConvGeometry geom{ws[1], ws[0], ws[2], ws[3], stride, padding};
  const std::size_t out_h = geom.conv_output(in.h, geom.kernel_h);
  const std::size_t out_w = geom.conv_output(in.w, geom.kernel_w);
  check_bias(bias, geom.out_channels, "conv2d");

  const kernels::PatchGeometry pg{in.c,          in.h,   in.w,    geom.kernel_h, geom.kernel_w,
                                  geom.stride,   geom.padding, out_h, out_w};
  const std::size_t rows = pg.rows();
  const std::size_t positions = pg.positions();
  const std::size_t oc = geom.out_channels;
  const std::size_t chunk = chunk_samples(rows, positions, in.n);

  Tensor<T> out(spatial_shape(in, oc, out_h, out_w));
  {
    const T* xd = x.value().data().data();
    const T* wd = weight.value().data().data();
    std::vector<T> col, tmp;
    for (std::size_t n0 = 0; n0 < in.n; n0 += chunk) {
      const std::size_t nb = std::min(chunk, in.n - n0);
      const std::size_t cols = nb * positions;
      col.assign(rows * cols, T{0});
      for (std::size_t s = 0; s < nb; ++s) {
        kernels::im2col(pg, xd + (n0 + s) * in.c * in.h * in.w, col.data(), cols, s * positions);
      }
      tmp.assign(oc * cols, T{0});
      kernels::gemm_nn(oc, cols, rows, wd, col.data(), tmp.data());
      unpack_add_channels(tmp.data(), n0, nb, oc, positions, out.data().data());
    }
    if (bias) {
      const Tensor<T>& b = bias->value();
      T* od = out.data().data();
      for (std::size_t s = 0; s < in.n; ++s) {
        for (std::size_t ch = 0; ch < oc; ++ch) {
          T* row = od + (s * oc + ch) * positions;
          for (std::size_t i = 0; i < positions; ++i) row[i] += b[ch];
        }
      }
    }
  }

  std::vector<NodeId> inputs{x.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  return x.graph().apply(
      "conv2d", std::move(inputs), std::move(out),
      [in, pg, rows, positions, oc, chunk](const BackwardContext<T>& ctx) {
        const T* xd = ctx.inputs[0]->data().data();
        const T* wd = ctx.inputs[1]->data().data();
        const T* gd = ctx.grad_output.data().data();
        Tensor<T>* gx = ctx.grad_inputs[0];
        Tensor<T>* gw = ctx.grad_inputs[1];
        std::vector<T> col, gcol, gpacked;
        for (std::size_t n0 = 0; n0 < in.n; n0 += chunk) {
          const std::size_t nb = std::min(chunk, in.n - n0);
          const std::size_t cols = nb * positions;
          gpacked.resize(oc * cols);
          pack_channels(gd, n0, nb, oc, positions, gpacked.data());
          if (gw) {
            col.assign(rows * cols, T{0});
            for (std::size_t s = 0; s < nb; ++s) {
              kernels::im2col(pg, xd + (n0 + s) * in.c * in.h * in.w, col.data(), cols,
                              s * positions);
            }
            kernels::gemm_nt(oc, rows, cols, gpacked.data(), col.data(), gw->data().data());
          }
          if (gx) {
            gcol.assign(rows * cols, T{0});
            kernels::gemm_tn(rows, cols, oc, wd, gpacked.data(), gcol.data());
            for (std::size_t s = 0; s < nb; ++s) {
              kernels::col2im(pg, gcol.data(), cols, s * positions,
                              gx->data().data() + (n0 + s) * in.c * in.h * in.w);
            }
          }
        }
        if (ctx.grad_inputs.size() > 2 && ctx.grad_inputs[2]) {
          add_bias_grad(ctx.grad_output, in.n, oc, positions, *ctx.grad_inputs[2]);
        }
      });
}

template <typename T>
Var<T> transposed_conv2d_impl(Var<T> x, Var<T> weight, std::optional<Var<T>> bias,
                              std::size_t stride, std::size_t padding) {
  const Batched in = spatial_dims(x.shape(), "transposed_conv2d");
  const Shape& ws = weight.shape();
  if (ws.size() != 4 || ws[0] != in.c) {
    throw ShapeError("transposed_conv2d: weight " + to_string(ws) +
                     " incompatible with input " + to_string(x.shape()));
  }
  if (stride == 0) throw ShapeError("transposed_conv2d: stride must be positive");
  const ConvGeometry geom{ws[0], ws[1], ws[2], ws[3], stride, padding};
  const std::size_t out_h = geom.transposed_output(in.h, geom.kernel_h);
  const std::size_t out_w = geom.transposed_output(in.w, geom.kernel_w);
  // The forward convolution over the output must land exactly on the input grid.
  if (geom.conv_output(out_h, geom.kernel_h) != in.h ||
      geom.conv_output(out_w, geom.kernel_w) != in.w) {
    throw ShapeError("transposed_conv2d: inconsistent stride/padding for input " +
                     to_string(x.shape()));
  }
  check_bias(bias, geom.out_channels, "transposed_conv2d");

  const std::size_t oc = geom.out_channels;
  const kernels::PatchGeometry pg{oc, out_h, out_w, geom.kernel_h, geom.kernel_w,
                                  geom.stride, geom.padding, in.h, in.w};
  const std::size_t rows = pg.rows();
  const std::size_t positions = in.h * in.w;
  const std::size_t out_plane = out_h * out_w;
  const std::size_t chunk = chunk_samples(rows, positions, in.n);

  Tensor<T> out(spatial_shape(in, oc, out_h, out_w));
  {
    const T* xd = x.value().data().data();
    const T* wd = weight.value().data().data();
    std::vector<T> xpacked, col;
    for (std::size_t n0 = 0; n0 < in.n; n0 += chunk) {
      const std::size_t nb = std::min(chunk, in.n - n0);
      const std::size_t cols = nb * positions;
      xpacked.resize(in.c * cols);
      pack_channels(xd, n0, nb, in.c, positions, xpacked.data());
      col.assign(rows * cols, T{0});
      kernels::gemm_tn(rows, cols, in.c, wd, xpacked.data(), col.data());
      for (std::size_t s = 0; s < nb; ++s) {
        kernels::col2im(pg, col.data(), cols, s * positions,
                        out.data().data() + (n0 + s) * oc * out_plane);
      }
    }
    if (bias) {
      const Tensor<T>& b = bias->value();
      T* od = out.data().data();
      for (std::size_t s = 0; s < in.n; ++s) {
        for (std::size_t ch = 0; ch < oc; ++ch) {
          T* row = od + (s * oc + ch) * out_plane;
          for (std::size_t i = 0; i < out_plane; ++i) row[i] += b[ch];
        }
      }
    }
  }

  std::vector<NodeId> inputs{x.id(), weight.id()};
  if (bias) inputs.push_back(bias->id());
  return x.graph().apply(
      "transposed_conv2d", std::move(inputs), std::move(out),
      [in, pg, rows, positions, oc, out_plane, chunk](const BackwardContext<T>& ctx) {
        const T* xd = ctx.inputs[0]->data().data();
        const T* wd = ctx.inputs[1]->data().data();
        const T* gd = ctx.grad_output.data().data();
        Tensor<T>* gx = ctx.grad_inputs[0];
        Tensor<T>* gw = ctx.grad_inputs[1];
        std::vector<T> gcol, xpacked, gxpacked;
        for (std::size_t n0 = 0; n0 < in.n; n0 += chunk) {
          const std::size_t nb = std::min(chunk, in.n - n0);
          const std::size_t cols = nb * positions;
          gcol.assign(rows * cols, T{0});
          for (std::size_t s = 0; s < nb; ++s) {
            kernels::im2col(pg, gd + (n0 + s) * oc * out_plane, gcol.data(), cols,
                            s * positions);
          }
          if (gx) {
            gxpacked.assign(in.c * cols, T{0});
            kernels::gemm_nn(in.c, cols, rows, wd, gcol.data(), gxpacked.data());
            unpack_add_channels(gxpacked.data(), n0, nb, in.c, positions, gx->data().data());
          }
          if (gw) {
            xpacked.resize(in.c * cols);
            pack_channels(xd, n0, nb, in.c, positions, xpacked.data());
            kernels::gemm_nt(in.c, rows, cols, xpacked.data(), gcol.data(), gw->data().data());
          }
        }
        if (ctx.grad_inputs.size() > 2 && ctx.grad_inputs[2]) {
          add_bias_grad(ctx.grad_output, in.n, oc, out_plane, *ctx.grad_inputs[2]);
        }
      });
}

}  // namespace

std::size_t ConvGeometry::conv_output(std::size_t extent, std::size_t kernel) const {
  const long span = static_cast<long>(extent + 2 * padding) - static_cast<long>(kernel);
  if (stride == 0 || span < 0) {
    throw ShapeError("convolution output extent < 1 (extent " + std::to_string(extent) +
                     ", kernel " + std::to_string(kernel) + ", padding " +
                     std::to_string(padding) + ")");
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t ConvGeometry::transposed_output(std::size_t extent, std::size_t kernel) const {
  const long out = static_cast<long>((extent - 1) * stride + kernel) - 2 * static_cast<long>(padding);
  if (extent == 0 || out < 1) {
    throw ShapeError("transposed convolution output extent < 1");
  }
  return static_cast<std::size_t>(out);
}

ConvGeometry ConvGeometry::same(std::size_t in, std::size_t out, std::size_t kernel) {
  if (kernel % 2 == 0) throw ShapeError("same padding needs an odd kernel");
  return ConvGeometry{in, out, kernel, kernel, 1, (kernel - 1) / 2};
}

template <typename T>
ConvSpec<T> ConvSpec<T>::zeros(const ConvGeometry& g, bool transposed) {
  Shape ws = transposed ? Shape{g.in_channels, g.out_channels, g.kernel_h, g.kernel_w}
                        : Shape{g.out_channels, g.in_channels, g.kernel_h, g.kernel_w};
  return ConvSpec{g, Tensor<T>(std::move(ws)), Tensor<T>(Shape{g.out_channels})};
}

template <typename T>
DenseSpec<T> DenseSpec<T>::zeros(std::size_t in, std::size_t out) {
  return DenseSpec{in, out, Tensor<T>(Shape{out, in}), Tensor<T>(Shape{out})};
}

template <typename T>
void init_he_uniform(Tensor<T>& weight, Tensor<T>& bias, std::size_t fan_in,
                     std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& v : weight.data()) v = static_cast<T>(dist(rng));
  bias.fill(T{0});
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding) {
  return conv2d_impl<T>(x, weight, bias, stride, padding);
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, std::size_t stride, std::size_t padding) {
  return conv2d_impl<T>(x, weight, std::nullopt, stride, padding);
}

template <typename T>
Var<T> conv2d(Var<T> x, const ConvSpec<T>& spec) {
  const std::size_t channels = x.shape().size() == 4 ? x.shape()[1] : x.shape().at(0);
  if (channels != spec.geometry.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(channels) + " channels, spec expects " +
                     std::to_string(spec.geometry.in_channels));
  }
  Graph<T>& g = x.graph();
  return conv2d_impl<T>(x, g.constant(spec.weight), g.constant(spec.bias), spec.geometry.stride,
                        spec.geometry.padding);
}

template <typename T>
Var<T> transposed_conv2d(Var<T> x, Var<T> weight, Var<T> bias, std::size_t stride,
                         std::size_t padding) {
  return transposed_conv2d_impl<T>(x, weight, bias, stride, padding);
}

template <typename T>
Var<T> transposed_conv2d(Var<T> x, Var<T> weight, std::size_t stride, std::size_t padding) {
  return transposed_conv2d_impl<T>(x, weight, std::nullopt, stride, padding);
}

template <typename T>
Var<T> transposed_conv2d(Var<T> x, const ConvSpec<T>& spec) {
  Graph<T>& g = x.graph();
  return transposed_conv2d_impl<T>(x, g.constant(spec.weight), g.constant(spec.bias),
                                   spec.geometry.stride, spec.geometry.padding);
}

template <typename T>
Var<T> max_pool2d(Var<T> x, std::size_t window, std::size_t stride) {
  const Batched in = spatial_dims(x.shape(), "max_pool2d");
  if (window == 0 || window != stride) {
    throw ShapeError("max_pool2d: window must equal stride and be positive");
  }
  if (in.h % stride != 0 || in.w % stride != 0) {
    throw ShapeError("max_pool2d: extents " + std::to_string(in.h) + "x" + std::to_string(in.w) +
                     " not divisible by " + std::to_string(stride));
  }
  const std::size_t oh = in.h / stride, ow = in.w / stride;
  Tensor<T> out(spatial_shape(in, in.c, oh, ow));
  std::vector<std::size_t> argmax(out.size());
  const T* xd = x.value().data().data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const std::size_t base = plane * in.h * in.w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * in.w + ox * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oy * stride + i) * in.w + ox * stride + j;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        argmax[o] = best;
        out[o] = xd[best];
      }
    }
  }
  return x.graph().apply("max_pool2d", {x.id()}, std::move(out),
                         [argmax = std::move(argmax)](const BackwardContext<T>& ctx) {
                           Tensor<T>& gx = *ctx.grad_inputs[0];
                           const auto g = ctx.grad_output.data();
                           for (std::size_t i = 0; i < g.size(); ++i) gx[argmax[i]] += g[i];
                         });
}

template <typename T>
Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
  const Batched in = spatial_dims(x.shape(), "upsample_nearest");
  if (factor == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t oh = in.h * factor, ow = in.w * factor;
  Tensor<T> out(spatial_shape(in, in.c, oh, ow));
  const T* xd = x.value().data().data();
  T* od = out.data().data();
  for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
    const T* src = xd + plane * in.h * in.w;
    T* dst = od + plane * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) dst[y * ow + xx] = src[(y / factor) * in.w + xx / factor];
    }
  }
  return x.graph().apply(
      "upsample_nearest", {x.id()}, std::move(out), [in, factor](const BackwardContext<T>& ctx) {
        const std::size_t oh = in.h * factor, ow = in.w * factor;
        const T* g = ctx.grad_output.data().data();
        T* gx = ctx.grad_inputs[0]->data().data();
        for (std::size_t plane = 0; plane < in.n * in.c; ++plane) {
          const T* src = g + plane * oh * ow;
          T* dst = gx + plane * in.h * in.w;
          for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t xx = 0; xx < ow; ++xx) dst[(y / factor) * in.w + xx / factor] += src[y * ow + xx];
          }
        }
      });
}

template <typename T>
Var<T> dense(Var<T> x, Var<T> weight, Var<T> bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (ws.size() != 2 || (xs.size() != 1 && xs.size() != 2) || xs.back() != ws[1] ||
      bias.shape() != Shape{ws[0]}) {
    throw ShapeError("dense: input " + to_string(xs) + ", weight " + to_string(ws) + ", bias " +
                     to_string(bias.shape()));
  }
  const std::size_t batch = xs.size() == 2 ? xs[0] : 1;
  const std::size_t in = ws[1], out_features = ws[0];
  Tensor<T> out(xs.size() == 2 ? Shape{batch, out_features} : Shape{out_features});
  kernels::gemm_nt(batch, out_features, in, x.value().data().data(), weight.value().data().data(),
                   out.data().data());
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t o = 0; o < out_features; ++o) out[s * out_features + o] += bias.value()[o];
  }
  return x.graph().apply(
      "dense", {x.id(), weight.id(), bias.id()}, std::move(out),
      [batch, in, out_features](const BackwardContext<T>& ctx) {
        const T* g = ctx.grad_output.data().data();
        if (ctx.grad_inputs[0]) {
          kernels::gemm_nn(batch, in, out_features, g, ctx.inputs[1]->data().data(),
                           ctx.grad_inputs[0]->data().data());
        }
        if (ctx.grad_inputs[1]) {
          kernels::gemm_tn(out_features, in, batch, g, ctx.inputs[0]->data().data(),
                           ctx.grad_inputs[1]->data().data());
        }
        if (Tensor<T>* gb = ctx.grad_inputs[2]) {
          for (std::size_t s = 0; s < batch; ++s) {
            for (std::size_t o = 0; o < out_features; ++o) (*gb)[o] += g[s * out_features + o];
          }
        }
      });
}

template <typename T>
Var<T> dense(Var<T> x, const DenseSpec<T>& spec) {
  Graph<T>& g = x.graph();
  return dense<T>(x, g.constant(spec.weight), g.constant(spec.bias));
}

template <typename T>
Var<T> apply_activation(Var<T> x, Activation kind) {
  switch (kind) {
    case Activation::relu:
      return ops::relu(x);
    case Activation::sigmoid:
      return ops::sigmoid(x);
    case Activation::identity:
      break;
  }
  return x;
}

template <typename T>
Var<T> flatten(Var<T> x) {
  const Batched in = spatial_dims(x.shape(), "flatten");
  const std::size_t features = in.c * in.h * in.w;
  return ops::reshape(x, in.had_batch ? Shape{in.n, features} : Shape{features});
}

#define LEAFAE_INSTANTIATE_NN(T)                                                          \
  template struct ConvSpec<T>;                                                            \
  template struct DenseSpec<T>;                                                           \
  template void init_he_uniform(Tensor<T>&, Tensor<T>&, std::size_t, std::mt19937_64&);   \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);               \
  template Var<T> conv2d(Var<T>, Var<T>, std::size_t, std::size_t);                       \
  template Var<T> conv2d(Var<T>, const ConvSpec<T>&);                                     \
  template Var<T> transposed_conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);    \
  template Var<T> transposed_conv2d(Var<T>, Var<T>, std::size_t, std::size_t);            \
  template Var<T> transposed_conv2d(Var<T>, const ConvSpec<T>&);                          \
  template Var<T> max_pool2d(Var<T>, std::size_t, std::size_t);                           \
  template Var<T> upsample_nearest(Var<T>, std::size_t);                                  \
  template Var<T> dense(Var<T>, Var<T>, Var<T>);                                          \
  template Var<T> dense(Var<T>, const DenseSpec<T>&);                                     \
  template Var<T> apply_activation(Var<T>, Activation);                                   \
  template Var<T> flatten(Var<T>);

LEAFAE_INSTANTIATE_NN(float)
LEAFAE_INSTANTIATE_NN(double)

}  // namespace leafae::nn
