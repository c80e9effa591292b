#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "leafae/checkpoint.hpp"
#include "leafae/detect.hpp"
#include "leafae/optim.hpp"
#include "leafae/run_config.hpp"

namespace leafae::cli {

struct TrainOutcome {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  optim::TrainResult result;
};

/// Trains on the healthy training split and writes the checkpoint and
/// `<out>/loss.csv`.
TrainOutcome cmd_train(const RunConfig& config, std::ostream& log);

struct EvaluateOutcome {
  detect::AnomalyReport report;
  std::filesystem::path csv;
  std::filesystem::path json;
};

/// Scores the test split with a threshold from the validation split; writes
/// `<out>/report.csv` and `<out>/summary.json`.
EvaluateOutcome cmd_evaluate(const RunConfig& config, std::ostream& log);

/// Same evaluation for an in-memory model and split.
detect::AnomalyReport evaluate_model(const models::Autoencoder<float>& model,
                                     const data::DatasetSplit& split, double threshold_percentile);

/// Writes `<out>/heatmap.png` (and `<out>/heatmap_high_contrast.png`).
std::vector<std::filesystem::path> cmd_localize(const RunConfig& config, std::ostream& log);

struct CompareRow {
  models::ModelKind model;
  std::size_t epochs = 0;
  double train_seconds = 0.0;  // median over repeats
  double mse_healthy = 0.0;
  double mse_diseased = 0.0;
  double delta = 0.0;
  double auc = 0.0;
  std::vector<double> loss_history;
};

/// Trains all three models on the same split (VQ-VAE first) and writes
/// `<out>/compare.csv`, one row at a time.
std::vector<CompareRow> cmd_compare(const RunConfig& config, std::ostream& log);

/// Writes the synthetic benchmark plus `<out>/benchmark.cfg`.
void cmd_generate_synthetic(const RunConfig& config, std::ostream& log);

std::string format_compare_table(const std::vector<CompareRow>& rows);

}  // namespace leafae::cli
