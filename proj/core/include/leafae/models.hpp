#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leafae/graph.hpp"
#include "leafae/nn.hpp"

namespace leafae::models {

using leafae::to_string;

enum class ModelKind { cae, cvae, vqvae };

std::string_view to_string(ModelKind kind);
/// Accepts "cae", "cvae", "vqvae" (also "vq-vae"); throws std::invalid_argument.
ModelKind parse_model_kind(std::string_view name);

/// Architecture kind plus every hyperparameter a run needs. Input extents are
/// (height, width, channels); latent extents are (latent_height,
/// latent_width, latent_channels).
struct ModelConfig {
  ModelKind kind = ModelKind::cae;
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t channels = 3;
  std::size_t latent_height = 4;
  std::size_t latent_width = 4;
  std::size_t latent_channels = 64;
  std::size_t bottleneck = 16;
  std::size_t codebook_size = 512;
  double beta = 0.25;
  std::size_t epochs = 200;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;

  /// Full-scale setup (input_size 256) or the CPU "desk" variant (32).
  /// Epoch defaults: CAE 200, CVAE 100, VQ-VAE 50.
  static ModelConfig defaults(ModelKind kind, std::size_t input_size = 256);

  std::size_t input_elements() const { return height * width * channels; }
  std::size_t latent_elements() const { return latent_height * latent_width * latent_channels; }

  /// Throws ContractViolation naming the first offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Ordered, named parameter tensors of one model.
template <typename T>
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor<T> value);

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& operator[](std::size_t i) { return values_.at(i); }
  const Tensor<T>& operator[](std::size_t i) const { return values_.at(i); }
  /// Index of a named tensor; throws std::out_of_range when absent.
  std::size_t index_of(std::string_view name) const;
  std::size_t element_count() const;

  /// Adds every parameter to `g` as a leaf.
  std::vector<Var<T>> bind(Graph<T>& g, bool requires_grad = true) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
};

/// Records (layer name, output shape) pairs during a forward pass.
using LayerTrace = std::vector<std::pair<std::string, Shape>>;

/// Differentiable training objective for one batch plus its reconstruction.
template <typename T>
struct TrainingPass {
  Var<T> output;
  Var<T> reconstruction_loss;
  Var<T> loss;
};

/// Common surface of the three autoencoders. Inputs are [N,C,H,W] batches
/// (or a single [C,H,W] image) with values in [0,1].
template <typename T>
class Autoencoder {
 public:
  explicit Autoencoder(ModelConfig config) : config_(std::move(config)) {}
  virtual ~Autoencoder() = default;

  const ModelConfig& config() const noexcept { return config_; }
  ParameterStore<T>& parameters() noexcept { return params_; }
  const ParameterStore<T>& parameters() const noexcept { return params_; }

  /// Builds the loss for a batch; `rng` drives any sampling the model does.
  virtual TrainingPass<T> training_pass(Graph<T>& g, std::span<const Var<T>> params, Var<T> batch,
                                        std::mt19937_64& rng) const = 0;

  /// Deterministic reconstruction (the CVAE decodes its mean latent).
  virtual Tensor<T> reconstruct(const Tensor<T>& batch) const = 0;

 protected:
  ModelConfig config_;
  ParameterStore<T> params_;
};

// ---- losses -------------------------------------------------------------

/// Mean over all elements (and the batch) of the squared difference.
template <typename T>
Var<T> mse_loss(Var<T> x_in, Var<T> x_out);

/// Diagonal Gaussian latent; the variance head emits log-variances.
template <typename T>
struct GaussianLatent {
  Var<T> mean;
  Var<T> log_variance;
};

/// KL(N(mu, exp(lv)) || N(0, I)) = 1/2 sum_j (exp(lv_j) + mu_j^2 - 1 - lv_j),
/// averaged over the batch for [N, L] latents.
template <typename T>
Var<T> kl_divergence(const GaussianLatent<T>& latent);

/// x_lat = mu + exp(log_var / 2) * noise.
template <typename T>
Var<T> reparametrize(const GaussianLatent<T>& latent, const Tensor<T>& noise);

template <typename T>
Var<T> cvae_loss(Var<T> x_in, Var<T> x_out, const GaussianLatent<T>& latent);

/// Reconstruction + codebook alignment + beta * commitment. Both squared-norm
/// terms are per-element means; the stop gradients send the alignment term
/// only to the codebook and the commitment term only to the encoder.
template <typename T>
Var<T> vqvae_loss(Var<T> x_in, Var<T> x_out, Var<T> x_enc, Var<T> z_q, T beta);

// ---- quantizer ----------------------------------------------------------

/// K learnable vectors of length C (rows of a [K, C] tensor).
template <typename T>
struct Codebook {
  Tensor<T> vectors;

  std::size_t size() const { return vectors.dim(0); }
  std::size_t dimension() const { return vectors.dim(1); }
  /// Uniform in [-1/sqrt(C), 1/sqrt(C)].
  static Codebook random(std::size_t entries, std::size_t dimension, std::mt19937_64& rng);
};

template <typename T>
struct Quantized {
  Tensor<T> values;                  // same shape as the encoded tensor
  std::vector<std::size_t> indices;  // one per fiber, row-major over (n, h, w)
};

/// Replaces every channel fiber of `encoded` ([C,h,w] or [N,C,h,w]) by its
/// nearest codebook vector in Euclidean norm; ties go to the lowest index.
template <typename T>
Quantized<T> vq_quantize(const Tensor<T>& encoded, const Tensor<T>& codebook);

/// Differentiable lookup: places codebook rows `indices` into fibers of a
/// tensor shaped like `shape`. Gradients scatter-add into the codebook.
template <typename T>
Var<T> gather_fibers(Var<T> codebook, const std::vector<std::size_t>& indices, const Shape& shape);

// ---- architectures -------------------------------------------------------

/// A convolutional stage: optional nearest upsampling, (transposed) conv,
/// activation, optional max-pool.
struct ConvStage {
  std::string name;
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;
  nn::Activation activation = nn::Activation::relu;
  std::size_t upsample_before = 1;
  std::size_t pool_after = 1;
};

struct DenseStage {
  std::string name;
  std::size_t weight = 0;
  std::size_t bias = 0;
  nn::Activation activation = nn::Activation::relu;
};

template <typename T>
struct CaeForward {
  Var<T> encoded;     // (64,4,4) per image
  Var<T> bottleneck;  // 16 entries per image
  Var<T> output;
};

/// Convolutional autoencoder: conv/max-pool encoder, dense latent stack,
/// upsample/conv decoder with a sigmoid head.
template <typename T>
class Cae final : public Autoencoder<T> {
 public:
  explicit Cae(ModelConfig config);
  CaeForward<T> forward(std::span<const Var<T>> params, Var<T> x, LayerTrace* trace = nullptr) const;
  TrainingPass<T> training_pass(Graph<T>& g, std::span<const Var<T>> params, Var<T> batch,
                                std::mt19937_64& rng) const override;
  Tensor<T> reconstruct(const Tensor<T>& batch) const override;

 private:
  std::vector<ConvStage> encoder_, decoder_;
  std::vector<DenseStage> down_, up_;
};

template <typename T>
struct CvaeForward {
  GaussianLatent<T> latent;
  Var<T> sample;  // reparametrized latent fed to the decoder
  Var<T> output;
};

/// Convolutional variational autoencoder with two independent encoders for
/// the mean and the log-variance.
template <typename T>
class Cvae final : public Autoencoder<T> {
 public:
  explicit Cvae(ModelConfig config);
  /// With `rng` null the noise is zero and the sample equals the mean.
  CvaeForward<T> forward(std::span<const Var<T>> params, Var<T> x, std::mt19937_64* rng,
                         LayerTrace* trace = nullptr) const;
  /// Same as forward, with caller-supplied standard-normal noise.
  CvaeForward<T> forward_with_noise(std::span<const Var<T>> params, Var<T> x,
                                    const Tensor<T>& noise, LayerTrace* trace = nullptr) const;
  TrainingPass<T> training_pass(Graph<T>& g, std::span<const Var<T>> params, Var<T> batch,
                                std::mt19937_64& rng) const override;
  Tensor<T> reconstruct(const Tensor<T>& batch) const override;

 private:
  GaussianLatent<T> encode(std::span<const Var<T>> params, Var<T> x, LayerTrace* trace) const;
  Var<T> decode(std::span<const Var<T>> params, Var<T> sample, LayerTrace* trace) const;

  std::vector<ConvStage> mean_encoder_, var_encoder_, decoder_;
  std::vector<DenseStage> mean_head_, var_head_, up_;
};

template <typename T>
struct VqVaeForward {
  Var<T> encoded;        // x_enc
  Var<T> quantized;      // z_q, differentiable w.r.t. the codebook
  Var<T> decoder_input;  // straight-through copy of z_q
  Var<T> output;
  std::vector<std::size_t> indices;
};

/// Vector-quantized autoencoder: strided conv encoder, codebook lookup with
/// straight-through gradients, transposed conv decoder.
template <typename T>
class VqVae final : public Autoencoder<T> {
 public:
  explicit VqVae(ModelConfig config);
  VqVaeForward<T> forward(std::span<const Var<T>> params, Var<T> x, LayerTrace* trace = nullptr) const;
  TrainingPass<T> training_pass(Graph<T>& g, std::span<const Var<T>> params, Var<T> batch,
                                std::mt19937_64& rng) const override;
  Tensor<T> reconstruct(const Tensor<T>& batch) const override;

  std::size_t codebook_index() const noexcept { return codebook_; }
  const std::vector<ConvStage>& encoder() const noexcept { return encoder_; }
  const std::vector<ConvStage>& decoder() const noexcept { return decoder_; }

 private:
  std::vector<ConvStage> encoder_, decoder_;
  std::size_t codebook_ = 0;
};

/// Builds and seeds (config.seed) the model described by `config`.
template <typename T>
std::unique_ptr<Autoencoder<T>> make_model(const ModelConfig& config);

/// Runs a stack of conv stages, recording shapes when `trace` is set.
template <typename T>
Var<T> run_stages(std::span<const Var<T>> params, const std::vector<ConvStage>& stages, Var<T> x,
                  LayerTrace* trace);

}  // namespace leafae::models
