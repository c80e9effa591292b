#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "leafae/data.hpp"
#include "leafae/models.hpp"

namespace leafae::optim {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers (one per parameter tensor) and the step counter.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros(const models::ParameterStore<T>& params, AdamOptions options = {});
};

/// One bias-corrected Adam update. A null gradient counts as zero. Throws
/// ShapeError when a gradient or moment buffer does not match its parameter.
template <typename T>
void adam_step(models::ParameterStore<T>& params, std::span<const Tensor<T>* const> grads,
               AdamState<T>& state);

/// Default epoch count per architecture: CAE 200, CVAE 100, VQ-VAE 50.
std::size_t default_epochs(models::ModelKind kind);

/// Either a fixed number of epochs or a wall-clock allowance quantized to
/// whole epochs. `max_epochs` (0 = none) caps a wall-clock run.
struct TrainBudget {
  enum class Mode { epochs, wall_clock };

  Mode mode = Mode::epochs;
  std::size_t epochs = 1;
  double seconds = 0.0;
  std::size_t max_epochs = 0;

  static TrainBudget fixed_epochs(std::size_t n);
  static TrainBudget wall_clock(double seconds, std::size_t max_epochs = 0);

  /// Throws ContractViolation unless epochs > 0 (or seconds > 0).
  void validate() const;
};

/// Monotonic seconds since an arbitrary origin.
using Clock = std::function<double()>;
Clock steady_clock();

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double seconds = 0.0;   // duration of this epoch
};

struct TrainOptions {
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamOptions adam;
  Clock clock;  // defaults to steady_clock()
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::span<const data::LabeledImage* const>)> on_batch;
};

struct TrainResult {
  std::vector<double> loss_history;  // per-epoch mean loss over images
  std::vector<double> epoch_seconds;
  std::size_t epochs_completed = 0;
  std::size_t steps = 0;
  double elapsed_seconds = 0.0;
  /// Wall-clock mode only: the first epoch alone exceeded the budget.
  bool budget_overrun = false;
};

/// Mini-batch Adam training on healthy images. The order is reshuffled every
/// epoch from `options.seed`; a wall-clock run stops once the elapsed time
/// plus the mean epoch time would pass the budget, after at least one epoch.
/// Throws ContractViolation for an empty set or a diseased image.
template <typename T>
TrainResult train(models::Autoencoder<T>& model, std::span<const data::LabeledImage> train_set,
                  const TrainBudget& budget, const TrainOptions& options);

/// Stacks images into one [N,C,H,W] tensor.
template <typename T>
Tensor<T> stack_images(std::span<const data::LabeledImage* const> images);

/// `epoch,loss` rows with a header line.
void write_loss_csv(const std::filesystem::path& path, std::span<const double> history);

}  // namespace leafae::optim
