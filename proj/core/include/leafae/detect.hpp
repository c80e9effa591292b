#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leafae/data.hpp"
#include "leafae/models.hpp"

namespace leafae::detect {

using leafae::to_string;

// ---- scoring --------------------------------------------------------------

/// MSE between an image and the model's deterministic reconstruction.
template <typename T>
double reconstruction_score(const models::Autoencoder<T>& model, const Tensor32& image);

/// Scores many images, `batch_size` at a time. Same values as scoring one by one.
template <typename T>
std::vector<double> reconstruction_scores(const models::Autoencoder<T>& model,
                                          std::span<const data::LabeledImage* const> images,
                                          std::size_t batch_size = 32);

template <typename T>
Tensor32 reconstruct_image(const models::Autoencoder<T>& model, const Tensor32& image);

/// Linear interpolation between order statistics (position p/100 * (n-1)).
double percentile(std::span<const double> values, double p);

/// Percentile of healthy validation scores; p must lie in (0,100].
double choose_threshold(std::span<const double> validation_scores, double percentile = 95.0);

enum class Verdict { healthy, anomalous };
std::string_view to_string(Verdict v);

/// Healthy iff score < threshold; a score on the threshold is anomalous.
Verdict classify(double score, double threshold);

// ---- metrics --------------------------------------------------------------

/// P(diseased score > healthy score) with ties counted 1/2.
double auc_roc(std::span<const double> healthy, std::span<const double> diseased);

struct RocPoint {
  double threshold;
  double false_positive_rate;
  double true_positive_rate;
};

/// Operating points for "anomalous iff score >= threshold", one per distinct
/// score in decreasing order, preceded by the (0,0) point.
std::vector<RocPoint> roc_curve(std::span<const double> healthy, std::span<const double> diseased);

struct ScoredImage {
  std::string path;
  data::Label label = data::Label::healthy;
  double score = 0.0;
  Verdict verdict = Verdict::healthy;
};

struct AnomalyReport {
  std::vector<ScoredImage> images;
  double threshold = 0.0;
  std::size_t healthy_count = 0;
  std::size_t diseased_count = 0;
  double mean_healthy = 0.0;
  double mean_diseased = 0.0;
  double auc = 0.0;       // 0.5 when a class is missing
  double accuracy = 0.0;  // fraction of correct verdicts

  /// |mean_diseased - mean_healthy|; throws ContractViolation if a class is absent.
  double delta() const;
};

/// Classifies every scored image and fills the aggregates.
AnomalyReport build_report(std::vector<ScoredImage> images, double threshold);

double class_gap(const AnomalyReport& report);

/// `path,label,score,verdict` rows.
void write_report_csv(const std::filesystem::path& path, const AnomalyReport& report);
/// Means (raw and x1e3), delta, AUC, threshold and accuracy.
std::string report_summary_json(const AnomalyReport& report);
void write_report_json(const std::filesystem::path& path, const AnomalyReport& report);

// ---- localization ---------------------------------------------------------

/// Row-major H x W map.
struct Heatmap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  float at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

/// Channel mean of squared differences per pixel, unnormalized.
Heatmap pixel_error(const Tensor32& image, const Tensor32& reconstruction);

/// Min-max scaling to [0,1]; a constant map becomes all zeros.
Heatmap normalize(const Heatmap& map);

Heatmap localization_heatmap(const Tensor32& image, const Tensor32& reconstruction);

/// Linear blue (0,0,1) to yellow (1,1,0) color map as a [3,H,W] image.
Tensor32 render(const Heatmap& map);

/// Clips at the given percentile of the map and rescales to [0,1]. The
/// percentile must lie strictly between 50 and 100.
Heatmap high_contrast(const Heatmap& map, double percentile = 99.0);

/// Share of the `fraction` highest-valued pixels that fall inside `mask`
/// (ties broken by pixel index).
double top_pixel_overlap(const Heatmap& map, std::span<const std::uint8_t> mask,
                         double fraction = 0.05);

}  // namespace leafae::detect
