#include "leafae/models.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "leafae/ops.hpp"

namespace leafae::models {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::cae:
      return "cae";
    case ModelKind::cvae:
      return "cvae";
    case ModelKind::vqvae:
      return "vqvae";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "cae") return ModelKind::cae;
  if (name == "cvae") return ModelKind::cvae;
  if (name == "vqvae" || name == "vq-vae") return ModelKind::vqvae;
  throw std::invalid_argument("unknown model kind '" + std::string(name) +
                              "' (expected cae, cvae or vqvae)");
}

ModelConfig ModelConfig::defaults(ModelKind kind, std::size_t input_size) {
  ModelConfig c;
  c.kind = kind;
  c.height = c.width = input_size;
  switch (kind) {
    case ModelKind::cae:
      c.epochs = 200;
      break;
    case ModelKind::cvae:
      c.epochs = 100;
      break;
    case ModelKind::vqvae:
      c.epochs = 50;
      if (input_size == 32) c.latent_height = c.latent_width = 2;
      break;
  }
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ContractViolation("invalid model config field '" + field + "': " + why);
  };
  if (height != width) fail("size", "only square inputs are supported");
  if (height != 256 && height != 32) fail("size", "must be 256 or 32, got " + std::to_string(height));
  if (channels != 3) fail("channels", "RGB input expected");
  const std::size_t side = kind == ModelKind::vqvae && height == 32 ? 2 : 4;
  if (latent_height != side || latent_width != side || latent_channels != 64) {
    fail("latent", "the architecture produces a (" + std::to_string(side) + "," + std::to_string(side) +
                       ",64) latent tensor");
  }
  if (latent_elements() >= input_elements()) fail("latent", "latent must be smaller than the input");
  if (bottleneck == 0 || bottleneck >= latent_elements()) fail("bottleneck", "must be in [1, 1024)");
  if (codebook_size == 0) fail("codebook-size", "must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta", "must be > 0");
  if (epochs == 0) fail("epochs", "must be > 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("lr", "must be > 0");
  if (batch_size == 0) fail("batch-size", "must be > 0");
}

// ---- ParameterStore -------------------------------------------------------

template <typename T>
std::size_t ParameterStore<T>::add(std::string name, Tensor<T> value) {
  for (const auto& n : names_) {
    if (n == name) throw ContractViolation("duplicate parameter name " + name);
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return values_.size() - 1;
}

template <typename T>
std::size_t ParameterStore<T>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
std::size_t ParameterStore<T>::element_count() const {
  std::size_t total = 0;
  for (const auto& v : values_) total += v.size();
  return total;
}

template <typename T>
std::vector<Var<T>> ParameterStore<T>::bind(Graph<T>& g, bool requires_grad) const {
  std::vector<Var<T>> vars;
  vars.reserve(values_.size());
  for (const auto& v : values_) vars.push_back(g.leaf(v, requires_grad));
  return vars;
}

// ---- losses ---------------------------------------------------------------

template <typename T>
Var<T> mse_loss(Var<T> x_in, Var<T> x_out) {
  require_same_shape(x_in.shape(), x_out.shape(), "mse_loss");
  return ops::mean(ops::square(ops::sub(x_in, x_out)));
}

template <typename T>
Var<T> kl_divergence(const GaussianLatent<T>& latent) {
  require_same_shape(latent.mean.shape(), latent.log_variance.shape(), "kl_divergence");
  const Shape& s = latent.mean.shape();
  const T batch = s.size() >= 2 ? static_cast<T>(s[0]) : T{1};
  Var<T> terms = ops::sub(ops::add(ops::exp(latent.log_variance), ops::square(latent.mean)),
                          ops::add_constant(latent.log_variance, T{1}));
  return ops::scale(ops::sum(terms), T{0.5} / batch);
}

template <typename T>
Var<T> reparametrize(const GaussianLatent<T>& latent, const Tensor<T>& noise) {
  require_same_shape(noise.shape(), latent.mean.shape(), "reparametrize noise");
  Graph<T>& g = latent.mean.graph();
  return ops::add(latent.mean,
                  ops::mul(ops::exp(ops::scale(latent.log_variance, T{0.5})), g.constant(noise)));
}

template <typename T>
Var<T> cvae_loss(Var<T> x_in, Var<T> x_out, const GaussianLatent<T>& latent) {
  return ops::add(mse_loss(x_in, x_out), kl_divergence(latent));
}

template <typename T>
Var<T> vqvae_loss(Var<T> x_in, Var<T> x_out, Var<T> x_enc, Var<T> z_q, T beta) {
  if (!(beta > T{0})) throw ContractViolation("vqvae_loss: beta must be > 0");
  require_same_shape(x_enc.shape(), z_q.shape(), "vqvae_loss");
  Var<T> alignment = ops::mean(ops::square(ops::sub(ops::stop_gradient(x_enc), z_q)));
  Var<T> commitment = ops::mean(ops::square(ops::sub(x_enc, ops::stop_gradient(z_q))));
  return ops::add(ops::add(mse_loss(x_in, x_out), alignment), ops::scale(commitment, beta));
}

// ---- quantizer --------------------------------------------------------------

template <typename T>
Codebook<T> Codebook<T>::random(std::size_t entries, std::size_t dimension, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(dimension));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> v(Shape{entries, dimension});
  for (T& x : v.data()) x = static_cast<T>(dist(rng));
  return Codebook{std::move(v)};
}

namespace {

struct FiberLayout {
  std::size_t batch, channels, positions;
};

FiberLayout fiber_layout(const Shape& s, const char* what) {
  if (s.size() == 3) return {1, s[0], s[1] * s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2] * s[3]};
  throw ShapeError(std::string(what) + ": expected [C,h,w] or [N,C,h,w], got " + to_string(s));
}

}  // namespace

template <typename T>
Quantized<T> vq_quantize(const Tensor<T>& encoded, const Tensor<T>& codebook) {
  const FiberLayout f = fiber_layout(encoded.shape(), "vq_quantize");
  if (codebook.rank() != 2 || codebook.dim(1) != f.channels || codebook.dim(0) == 0) {
    throw ShapeError("vq_quantize: codebook " + to_string(codebook.shape()) +
                     " does not match fiber length " + std::to_string(f.channels));
  }
  const std::size_t k = codebook.dim(0);
  Quantized<T> out{Tensor<T>(encoded.shape()), {}};
  out.indices.reserve(f.batch * f.positions);
  std::vector<T> fiber(f.channels);
  for (std::size_t n = 0; n < f.batch; ++n) {
    const T* base = encoded.data().data() + n * f.channels * f.positions;
    T* dst = out.values.data().data() + n * f.channels * f.positions;
    for (std::size_t p = 0; p < f.positions; ++p) {
      for (std::size_t c = 0; c < f.channels; ++c) fiber[c] = base[c * f.positions + p];
      std::size_t best = 0;
      T best_dist = std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < k; ++e) {
        const T* row = codebook.data().data() + e * f.channels;
        T d{0};
        for (std::size_t c = 0; c < f.channels; ++c) {
          const T diff = fiber[c] - row[c];
          d += diff * diff;
        }
        if (d < best_dist) {
          best_dist = d;
          best = e;
        }
      }
      out.indices.push_back(best);
      const T* row = codebook.data().data() + best * f.channels;
      for (std::size_t c = 0; c < f.channels; ++c) dst[c * f.positions + p] = row[c];
    }
  }
  return out;
}

template <typename T>
Var<T> gather_fibers(Var<T> codebook, const std::vector<std::size_t>& indices, const Shape& shape) {
  const FiberLayout f = fiber_layout(shape, "gather_fibers");
  const Shape& cs = codebook.shape();
  if (cs.size() != 2 || cs[1] != f.channels || indices.size() != f.batch * f.positions) {
    throw ShapeError("gather_fibers: codebook " + to_string(cs) + " / " +
                     std::to_string(indices.size()) + " indices vs shape " + to_string(shape));
  }
  Tensor<T> out(shape);
  const T* cb = codebook.value().data().data();
  for (std::size_t n = 0; n < f.batch; ++n) {
    for (std::size_t p = 0; p < f.positions; ++p) {
      const std::size_t idx = indices[n * f.positions + p];
      if (idx >= cs[0]) throw ShapeError("gather_fibers: index out of range");
      for (std::size_t c = 0; c < f.channels; ++c) {
        out[(n * f.channels + c) * f.positions + p] = cb[idx * f.channels + c];
      }
    }
  }
  return codebook.graph().apply(
      "gather_fibers", {codebook.id()}, std::move(out), [f, indices](const BackwardContext<T>& ctx) {
        T* gcb = ctx.grad_inputs[0]->data().data();
        const T* g = ctx.grad_output.data().data();
        for (std::size_t n = 0; n < f.batch; ++n) {
          for (std::size_t p = 0; p < f.positions; ++p) {
            const std::size_t idx = indices[n * f.positions + p];
            for (std::size_t c = 0; c < f.channels; ++c) {
              gcb[idx * f.channels + c] += g[(n * f.channels + c) * f.positions + p];
            }
          }
        }
      });
}

// ---- shared architecture helpers ------------------------------------------

namespace {

struct ConvPlan {
  const char* name;
  std::size_t in, out, kernel, stride, padding;
  bool transposed;
  nn::Activation activation;
  std::size_t upsample_before, pool_after;
};

template <typename T>
ConvStage add_conv(ParameterStore<T>& params, const std::string& prefix, const ConvPlan& p,
                   std::mt19937_64& rng) {
  Shape ws = p.transposed ? Shape{p.in, p.out, p.kernel, p.kernel}
                          : Shape{p.out, p.in, p.kernel, p.kernel};
  Tensor<T> w(std::move(ws));
  Tensor<T> b(Shape{p.out});
  std::size_t fan_in = p.in * p.kernel * p.kernel;
  if (p.transposed) fan_in = std::max<std::size_t>(1, fan_in / (p.stride * p.stride));
  nn::init_he_uniform(w, b, fan_in, rng);
  ConvStage s;
  s.name = prefix + "." + p.name;
  s.weight = params.add(s.name + ".weight", std::move(w));
  s.bias = params.add(s.name + ".bias", std::move(b));
  s.stride = p.stride;
  s.padding = p.padding;
  s.transposed = p.transposed;
  s.activation = p.activation;
  s.upsample_before = p.upsample_before;
  s.pool_after = p.pool_after;
  return s;
}

template <typename T>
DenseStage add_dense(ParameterStore<T>& params, const std::string& name, std::size_t in,
                     std::size_t out, nn::Activation act, std::mt19937_64& rng) {
  Tensor<T> w(Shape{out, in});
  Tensor<T> b(Shape{out});
  nn::init_he_uniform(w, b, in, rng);
  DenseStage s;
  s.name = name;
  s.weight = params.add(name + ".weight", std::move(w));
  s.bias = params.add(name + ".bias", std::move(b));
  s.activation = act;
  return s;
}

template <typename T>
Var<T> run_dense(std::span<const Var<T>> params, const std::vector<DenseStage>& stages, Var<T> x,
                 LayerTrace* trace) {
  for (const auto& s : stages) {
    x = nn::apply_activation(nn::dense(x, params[s.weight], params[s.bias]), s.activation);
    if (trace) trace->emplace_back(s.name, x.shape());
  }
  return x;
}

// Pool factors of the five conv/pool stages: 256 -> 4 uses 2,2,2,2,4; the
// 32x32 desk variant pools three times (32 -> 4).
std::vector<std::size_t> pool_schedule(std::size_t input_size) {
  if (input_size == 256) return {2, 2, 2, 2, 4};
  return {2, 2, 2, 1, 1};
}

constexpr std::size_t kConvChannels[] = {3, 8, 16, 32, 64, 64};

template <typename T>
std::vector<ConvStage> build_conv_encoder(ParameterStore<T>& params, const std::string& prefix,
                                          std::size_t input_size, std::mt19937_64& rng) {
  const auto pools = pool_schedule(input_size);
  std::vector<ConvStage> stages;
  static const char* names[] = {"conv0", "conv1", "conv2", "conv3", "conv4"};
  for (std::size_t i = 0; i < 5; ++i) {
    stages.push_back(add_conv(params, prefix,
                              ConvPlan{names[i], kConvChannels[i], kConvChannels[i + 1], 3, 1, 1,
                                       false, nn::Activation::relu, 1, pools[i]},
                              rng));
  }
  return stages;
}

template <typename T>
std::vector<ConvStage> build_conv_decoder(ParameterStore<T>& params, std::size_t input_size,
                                          std::mt19937_64& rng) {
  const auto pools = pool_schedule(input_size);
  std::vector<ConvStage> stages;
  static const char* names[] = {"conv0", "conv1", "conv2", "conv3", "conv4"};
  for (std::size_t i = 0; i < 5; ++i) {
    const bool last = i == 4;
    stages.push_back(add_conv(
        params, "dec",
        ConvPlan{names[i], kConvChannels[5 - i], kConvChannels[4 - i], 3, 1, 1, false,
                 last ? nn::Activation::sigmoid : nn::Activation::relu, pools[4 - i], 1},
        rng));
  }
  return stages;
}

template <typename T>
std::pair<Var<T>, bool> as_batch(Var<T> x, const ModelConfig& c) {
  const Shape& s = x.shape();
  if (s == Shape{c.channels, c.height, c.width}) {
    return {ops::reshape(x, Shape{1, c.channels, c.height, c.width}), false};
  }
  if (s.size() == 4 && s[1] == c.channels && s[2] == c.height && s[3] == c.width) return {x, true};
  throw ShapeError("model expects input [N," + std::to_string(c.channels) + "," +
                   std::to_string(c.height) + "," + std::to_string(c.width) + "], got " +
                   to_string(s));
}

template <typename T>
Var<T> drop_batch(Var<T> x, bool batched) {
  if (batched) return x;
  Shape s(x.shape().begin() + 1, x.shape().end());
  return ops::reshape(x, std::move(s));
}

template <typename T>
Var<T> to_latent_grid(Var<T> flat, const ModelConfig& c) {
  return ops::reshape(flat, Shape{flat.shape()[0], c.latent_channels, c.latent_height, c.latent_width});
}

template <typename T>
Tensor<T> reconstruct_with(const Autoencoder<T>& model, const Tensor<T>& batch,
                           const std::function<Var<T>(std::span<const Var<T>>, Var<T>)>& fwd) {
  Graph<T> g;
  const auto params = model.parameters().bind(g, false);
  return fwd(params, g.constant(batch)).value();
}

}  // namespace

template <typename T>
Var<T> run_stages(std::span<const Var<T>> params, const std::vector<ConvStage>& stages, Var<T> x,
                  LayerTrace* trace) {
  for (const auto& s : stages) {
    if (s.upsample_before > 1) {
      x = nn::upsample_nearest(x, s.upsample_before);
      if (trace) trace->emplace_back(s.name + ".upsample", x.shape());
    }
    x = s.transposed
            ? nn::transposed_conv2d(x, params[s.weight], params[s.bias], s.stride, s.padding)
            : nn::conv2d(x, params[s.weight], params[s.bias], s.stride, s.padding);
    x = nn::apply_activation(x, s.activation);
    if (trace) trace->emplace_back(s.name, x.shape());
    if (s.pool_after > 1) {
      x = nn::max_pool2d(x, s.pool_after, s.pool_after);
      if (trace) trace->emplace_back(s.name + ".pool", x.shape());
    }
  }
  return x;
}

// ---- CAE ----------------------------------------------------------------

template <typename T>
Cae<T>::Cae(ModelConfig config) : Autoencoder<T>(std::move(config)) {
  const ModelConfig& c = this->config_;
  c.validate();
  std::mt19937_64 rng(c.seed);
  auto& p = this->params_;
  const std::size_t flat = c.latent_elements();
  const std::size_t hidden = flat / 8;
  encoder_ = build_conv_encoder(p, "enc", c.height, rng);
  down_.push_back(add_dense(p, "latent.down0", flat, hidden, nn::Activation::relu, rng));
  down_.push_back(add_dense(p, "latent.down1", hidden, c.bottleneck, nn::Activation::identity, rng));
  up_.push_back(add_dense(p, "latent.up0", c.bottleneck, hidden, nn::Activation::relu, rng));
  up_.push_back(add_dense(p, "latent.up1", hidden, flat, nn::Activation::relu, rng));
  decoder_ = build_conv_decoder(p, c.height, rng);
}

template <typename T>
CaeForward<T> Cae<T>::forward(std::span<const Var<T>> params, Var<T> x, LayerTrace* trace) const {
  auto [batch, batched] = as_batch(x, this->config_);
  Var<T> enc = run_stages(params, encoder_, batch, trace);
  Var<T> flat = nn::flatten(enc);
  if (trace) trace->emplace_back("flatten", flat.shape());
  Var<T> code = run_dense(params, down_, flat, trace);
  Var<T> up = to_latent_grid(run_dense(params, up_, code, trace), this->config_);
  if (trace) trace->emplace_back("view", up.shape());
  Var<T> out = run_stages(params, decoder_, up, trace);
  return {drop_batch(enc, batched), drop_batch(code, batched), drop_batch(out, batched)};
}

template <typename T>
TrainingPass<T> Cae<T>::training_pass(Graph<T>&, std::span<const Var<T>> params, Var<T> batch,
                                      std::mt19937_64&) const {
  CaeForward<T> f = forward(params, batch);
  Var<T> rec = mse_loss(batch, f.output);
  return {f.output, rec, rec};
}

template <typename T>
Tensor<T> Cae<T>::reconstruct(const Tensor<T>& batch) const {
  return reconstruct_with<T>(*this, batch, [this](std::span<const Var<T>> p, Var<T> x) {
    return forward(p, x).output;
  });
}

// ---- CVAE ---------------------------------------------------------------

template <typename T>
Cvae<T>::Cvae(ModelConfig config) : Autoencoder<T>(std::move(config)) {
  const ModelConfig& c = this->config_;
  c.validate();
  std::mt19937_64 rng(c.seed);
  auto& p = this->params_;
  const std::size_t flat = c.latent_elements();
  const std::size_t hidden = flat / 8;
  mean_encoder_ = build_conv_encoder(p, "enc_mean", c.height, rng);
  mean_head_.push_back(add_dense(p, "enc_mean.dense0", flat, hidden, nn::Activation::relu, rng));
  mean_head_.push_back(
      add_dense(p, "enc_mean.dense1", hidden, c.bottleneck, nn::Activation::identity, rng));
  var_encoder_ = build_conv_encoder(p, "enc_logvar", c.height, rng);
  var_head_.push_back(add_dense(p, "enc_logvar.dense0", flat, hidden, nn::Activation::relu, rng));
  var_head_.push_back(
      add_dense(p, "enc_logvar.dense1", hidden, c.bottleneck, nn::Activation::identity, rng));
  up_.push_back(add_dense(p, "latent.up0", c.bottleneck, hidden, nn::Activation::relu, rng));
  up_.push_back(add_dense(p, "latent.up1", hidden, flat, nn::Activation::relu, rng));
  decoder_ = build_conv_decoder(p, c.height, rng);
}

template <typename T>
GaussianLatent<T> Cvae<T>::encode(std::span<const Var<T>> params, Var<T> x, LayerTrace* trace) const {
  Var<T> mean = run_dense(params, mean_head_, nn::flatten(run_stages(params, mean_encoder_, x, trace)), trace);
  Var<T> log_var = run_dense(params, var_head_, nn::flatten(run_stages(params, var_encoder_, x, trace)), trace);
  return {mean, log_var};
}

template <typename T>
Var<T> Cvae<T>::decode(std::span<const Var<T>> params, Var<T> sample, LayerTrace* trace) const {
  Var<T> up = to_latent_grid(run_dense(params, up_, sample, trace), this->config_);
  if (trace) trace->emplace_back("view", up.shape());
  return run_stages(params, decoder_, up, trace);
}

template <typename T>
CvaeForward<T> Cvae<T>::forward_with_noise(std::span<const Var<T>> params, Var<T> x,
                                           const Tensor<T>& noise, LayerTrace* trace) const {
  auto [batch, batched] = as_batch(x, this->config_);
  GaussianLatent<T> lat = encode(params, batch, trace);
  require_same_shape(noise.shape(), lat.mean.shape(), "cvae noise");
  Var<T> sample = reparametrize(lat, noise);
  if (trace) trace->emplace_back("sample", sample.shape());
  Var<T> out = decode(params, sample, trace);
  return {{drop_batch(lat.mean, batched), drop_batch(lat.log_variance, batched)},
          drop_batch(sample, batched),
          drop_batch(out, batched)};
}

template <typename T>
CvaeForward<T> Cvae<T>::forward(std::span<const Var<T>> params, Var<T> x, std::mt19937_64* rng,
                                LayerTrace* trace) const {
  const std::size_t n = x.shape().size() == 4 ? x.shape()[0] : 1;
  Tensor<T> noise(Shape{n, this->config_.bottleneck});
  if (rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (T& v : noise.data()) v = static_cast<T>(normal(*rng));
  }
  return forward_with_noise(params, x, noise, trace);
}

template <typename T>
TrainingPass<T> Cvae<T>::training_pass(Graph<T>&, std::span<const Var<T>> params, Var<T> batch,
                                       std::mt19937_64& rng) const {
  CvaeForward<T> f = forward(params, batch, &rng);
  Var<T> rec = mse_loss(batch, f.output);
  return {f.output, rec, ops::add(rec, kl_divergence(f.latent))};
}

template <typename T>
Tensor<T> Cvae<T>::reconstruct(const Tensor<T>& batch) const {
  return reconstruct_with<T>(*this, batch, [this](std::span<const Var<T>> p, Var<T> x) {
    return forward(p, x, nullptr).output;
  });
}

// ---- VQ-VAE -------------------------------------------------------------

template <typename T>
VqVae<T>::VqVae(ModelConfig config) : Autoencoder<T>(std::move(config)) {
  const ModelConfig& c = this->config_;
  c.validate();
  std::mt19937_64 rng(c.seed);
  auto& p = this->params_;
  using nn::Activation;
  const std::size_t lc = c.latent_channels;
  std::vector<ConvPlan> enc, dec;
  if (c.height == 256) {
    // Three kernel-8 stride-4 convolutions: 256 -> 64 -> 16 -> 4.
    enc = {{"conv0", 3, 32, 8, 4, 2, false, Activation::relu, 1, 1},
           {"conv1", 32, 64, 8, 4, 2, false, Activation::relu, 1, 1},
           {"conv2", 64, lc, 8, 4, 2, false, Activation::identity, 1, 1}};
    dec = {{"tconv0", lc, 64, 8, 4, 2, true, Activation::relu, 1, 1},
           {"tconv1", 64, 32, 8, 4, 2, true, Activation::relu, 1, 1},
           {"tconv2", 32, 3, 8, 4, 2, true, Activation::sigmoid, 1, 1}};
  } else {
    // Desk variant: 32 -> 8 -> 2 -> 2.
    enc = {{"conv0", 3, 32, 8, 4, 2, false, Activation::relu, 1, 1},
           {"conv1", 32, 64, 8, 4, 2, false, Activation::relu, 1, 1},
           {"conv2", 64, lc, 3, 1, 1, false, Activation::identity, 1, 1}};
    dec = {{"tconv0", lc, 64, 3, 1, 1, true, Activation::relu, 1, 1},
           {"tconv1", 64, 32, 8, 4, 2, true, Activation::relu, 1, 1},
           {"tconv2", 32, 3, 8, 4, 2, true, Activation::sigmoid, 1, 1}};
  }
  for (const auto& plan : enc) encoder_.push_back(add_conv(p, "enc", plan, rng));
  codebook_ = p.add("codebook", Codebook<T>::random(c.codebook_size, lc, rng).vectors);
  for (const auto& plan : dec) decoder_.push_back(add_conv(p, "dec", plan, rng));
}

template <typename T>
VqVaeForward<T> VqVae<T>::forward(std::span<const Var<T>> params, Var<T> x, LayerTrace* trace) const {
  auto [batch, batched] = as_batch(x, this->config_);
  Var<T> enc = run_stages(params, encoder_, batch, trace);
  Var<T> codebook = params[codebook_];
  Quantized<T> q = vq_quantize(enc.value(), codebook.value());
  Var<T> z_q = gather_fibers(codebook, q.indices, enc.shape());
  if (trace) trace->emplace_back("quantize", z_q.shape());
  Var<T> dec_in = ops::straight_through(enc, z_q);
  Var<T> out = run_stages(params, decoder_, dec_in, trace);
  if (batched) return {enc, z_q, dec_in, out, std::move(q.indices)};
  return {drop_batch(enc, false), drop_batch(z_q, false), dec_in, drop_batch(out, false),
          std::move(q.indices)};
}

template <typename T>
TrainingPass<T> VqVae<T>::training_pass(Graph<T>&, std::span<const Var<T>> params, Var<T> batch,
                                        std::mt19937_64&) const {
  VqVaeForward<T> f = forward(params, batch);
  Var<T> rec = mse_loss(batch, f.output);
  return {f.output, rec,
          vqvae_loss(batch, f.output, f.encoded, f.quantized, static_cast<T>(this->config_.beta))};
}

template <typename T>
Tensor<T> VqVae<T>::reconstruct(const Tensor<T>& batch) const {
  return reconstruct_with<T>(*this, batch, [this](std::span<const Var<T>> p, Var<T> x) {
    return forward(p, x).output;
  });
}

template <typename T>
std::unique_ptr<Autoencoder<T>> make_model(const ModelConfig& config) {
  switch (config.kind) {
    case ModelKind::cae:
      return std::make_unique<Cae<T>>(config);
    case ModelKind::cvae:
      return std::make_unique<Cvae<T>>(config);
    case ModelKind::vqvae:
      return std::make_unique<VqVae<T>>(config);
  }
  throw ContractViolation("unknown model kind");
}

#define LEAFAE_INSTANTIATE_MODELS(T)                                                          \
  template class ParameterStore<T>;                                                           \
  template Var<T> mse_loss(Var<T>, Var<T>);                                                   \
  template Var<T> kl_divergence(const GaussianLatent<T>&);                                    \
  template Var<T> cvae_loss(Var<T>, Var<T>, const GaussianLatent<T>&);                        \
  template Var<T> reparametrize(const GaussianLatent<T>&, const Tensor<T>&);                  \
  template Var<T> vqvae_loss(Var<T>, Var<T>, Var<T>, Var<T>, T);                              \
  template struct Codebook<T>;                                                                \
  template Quantized<T> vq_quantize(const Tensor<T>&, const Tensor<T>&);                      \
  template Var<T> gather_fibers(Var<T>, const std::vector<std::size_t>&, const Shape&);       \
  template Var<T> run_stages(std::span<const Var<T>>, const std::vector<ConvStage>&, Var<T>,  \
                             LayerTrace*);                                                    \
  template class Cae<T>;                                                                      \
  template class Cvae<T>;                                                                     \
  template class VqVae<T>;                                                                    \
  template std::unique_ptr<Autoencoder<T>> make_model(const ModelConfig&);

LEAFAE_INSTANTIATE_MODELS(float)
LEAFAE_INSTANTIATE_MODELS(double)

}  // namespace leafae::models
