#include "leafae/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace leafae::optim {

template <typename T>
AdamState<T> AdamState<T>::zeros(const models::ParameterStore<T>& params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment.emplace_back(params[i].shape());
    state.second_moment.emplace_back(params[i].shape());
  }
  return state;
}

template <typename T>
void adam_step(models::ParameterStore<T>& params, std::span<const Tensor<T>* const> grads,
               AdamState<T>& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: expected " + std::to_string(params.size()) +
                     " gradients and moment buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].shape(), state.first_moment[i].shape(), "adam_step moment");
    require_same_shape(params[i].shape(), state.second_moment[i].shape(), "adam_step moment");
    if (grads[i]) require_same_shape(params[i].shape(), grads[i]->shape(), "adam_step gradient");
  }

  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T one_minus_b1 = static_cast<T>(1.0 - o.beta1), one_minus_b2 = static_cast<T>(1.0 - o.beta2);
  const T step_size = static_cast<T>(o.learning_rate / correction1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(correction2));
  const T eps = static_cast<T>(o.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<T> p = params[i].data();
    std::span<T> m = state.first_moment[i].data();
    std::span<T> v = state.second_moment[i].data();
    const Tensor<T>* g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T gj = g ? (*g)[j] : T{0};
      m[j] = b1 * m[j] + one_minus_b1 * gj;
      v[j] = b2 * v[j] + one_minus_b2 * gj * gj;
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

std::size_t default_epochs(models::ModelKind kind) {
  switch (kind) {
    case models::ModelKind::cae: return 200;
    case models::ModelKind::cvae: return 100;
    case models::ModelKind::vqvae: return 50;
  }
  return 0;
}

TrainBudget TrainBudget::fixed_epochs(std::size_t n) {
  TrainBudget b;
  b.mode = Mode::epochs;
  b.epochs = n;
  return b;
}

TrainBudget TrainBudget::wall_clock(double seconds, std::size_t max_epochs) {
  TrainBudget b;
  b.mode = Mode::wall_clock;
  b.seconds = seconds;
  b.max_epochs = max_epochs;
  return b;
}

void TrainBudget::validate() const {
  if (mode == Mode::epochs && epochs == 0) {
    throw ContractViolation("training budget: epochs must be positive");
  }
  if (mode == Mode::wall_clock && !(seconds > 0.0 && std::isfinite(seconds))) {
    throw ContractViolation("training budget: seconds must be positive");
  }
}

Clock steady_clock() {
  return [] {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
  };
}

template <typename T>
Tensor<T> stack_images(std::span<const data::LabeledImage* const> images) {
  if (images.empty()) throw ContractViolation("stack_images: no images");
  const Shape& first = images.front()->pixels.shape();
  Shape shape{images.size()};
  shape.insert(shape.end(), first.begin(), first.end());
  Tensor<T> out(shape);
  const std::size_t per = images.front()->pixels.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor32& px = images[i]->pixels;
    require_same_shape(first, px.shape(), "stack_images");
    std::copy(px.data().begin(), px.data().end(), out.data().begin() + i * per);
  }
  return out;
}

template <typename T>
TrainResult train(models::Autoencoder<T>& model, std::span<const data::LabeledImage> train_set,
                  const TrainBudget& budget, const TrainOptions& options) {
  budget.validate();
  if (train_set.empty()) throw ContractViolation("train: empty training set");
  if (options.batch_size == 0) throw ContractViolation("train: batch size must be positive");
  data::require_healthy(train_set, "training set");

  const models::ModelConfig& cfg = model.config();
  const Shape expected{cfg.channels, cfg.height, cfg.width};
  for (const auto& img : train_set) {
    if (img.pixels.shape() != expected) {
      throw ShapeError("train: image " + img.source + " has shape " + to_string(img.pixels.shape()) +
                       ", model expects " + to_string(expected));
    }
  }

  const Clock clock = options.clock ? options.clock : steady_clock();
  std::mt19937_64 order_rng(options.seed);
  std::mt19937_64 noise_rng(options.seed ^ 0x9E3779B97F4A7C15ull);
  AdamState<T> adam = AdamState<T>::zeros(model.parameters(), options.adam);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const data::LabeledImage*> batch_images;
  std::vector<const Tensor<T>*> grads;

  TrainResult result;
  const double start = clock();
  double epoch_start = start;
  while (true) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += options.batch_size) {
      const std::size_t end = std::min(order.size(), begin + options.batch_size);
      batch_images.clear();
      for (std::size_t k = begin; k < end; ++k) batch_images.push_back(&train_set[order[k]]);
      data::require_healthy(batch_images, "training batch");
      if (options.on_batch) options.on_batch(batch_images);

      Graph<T> g;
      const std::vector<Var<T>> params = model.parameters().bind(g, true);
      Var<T> x = g.constant(stack_images<T>(batch_images));
      models::TrainingPass<T> pass = model.training_pass(g, params, x, noise_rng);
      const Gradients<T> gradients = g.backward(pass.loss);
      grads.clear();
      for (const Var<T>& p : params) grads.push_back(gradients.find(p));
      adam_step<T>(model.parameters(), grads, adam);
      ++result.steps;
      loss_sum += static_cast<double>(pass.loss.value().item()) * static_cast<double>(end - begin);
    }

    const double now = clock();
    const double epoch_time = now - epoch_start;
    epoch_start = now;
    const double loss = loss_sum / static_cast<double>(order.size());
    result.loss_history.push_back(loss);
    result.epoch_seconds.push_back(epoch_time);
    ++result.epochs_completed;
    result.elapsed_seconds = now - start;
    if (options.on_epoch) options.on_epoch(EpochRecord{result.epochs_completed, loss, epoch_time});
    if (!std::isfinite(loss)) {
      throw std::runtime_error("training diverged: non-finite loss in epoch " +
                               std::to_string(result.epochs_completed));
    }

    if (budget.mode == TrainBudget::Mode::epochs) {
      if (result.epochs_completed >= budget.epochs) break;
    } else {
      if (result.epochs_completed == 1 && result.elapsed_seconds > budget.seconds) {
        result.budget_overrun = true;
      }
      if (budget.max_epochs != 0 && result.epochs_completed >= budget.max_epochs) break;
      const double mean_epoch =
          result.elapsed_seconds / static_cast<double>(result.epochs_completed);
      if (result.elapsed_seconds + mean_epoch > budget.seconds) break;
    }
  }
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write loss CSV " + path.string());
  out << "epoch,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, history[i]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

#define LEAFAE_INSTANTIATE_OPTIM(T)                                                              \
  template struct AdamState<T>;                                                                  \
  template void adam_step<T>(models::ParameterStore<T>&, std::span<const Tensor<T>* const>,     \
                             AdamState<T>&);                                                     \
  template Tensor<T> stack_images<T>(std::span<const data::LabeledImage* const>);               \
  template TrainResult train<T>(models::Autoencoder<T>&, std::span<const data::LabeledImage>, \
                                const TrainBudget&, const TrainOptions&);

LEAFAE_INSTANTIATE_OPTIM(float)
LEAFAE_INSTANTIATE_OPTIM(double)

}  // namespace leafae::optim
