#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "leafae/detect.hpp"
#include "support.hpp"

namespace leafae::detect {
namespace {

using data::Label;
using data::LabeledImage;
using leafae::testing::random_tensor;
using leafae::testing::TempDir;

// Reconstructs every input as `gain * x`.
class ScalingModel final : public models::Autoencoder<float> {
 public:
  explicit ScalingModel(float gain)
      : models::Autoencoder<float>(models::ModelConfig::defaults(models::ModelKind::cae, 32)), gain_(gain) {}
  models::TrainingPass<float> training_pass(Graph<float>&, std::span<const Var<float>>, Var<float>,
                                            std::mt19937_64&) const override {
    throw std::logic_error("not trainable");
  }
  Tensor32 reconstruct(const Tensor32& batch) const override {
    Tensor32 out = batch;
    for (float& v : out.data()) v *= gain_;
    return out;
  }

 private:
  float gain_;
};

Tensor32 random_image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor<float>(Shape{3, 32, 32}, rng, 0, 1);
}

// ---- scoring ---------------------------------------------------------------

TEST(Score, IdentityModelScoresZero) {
  const ScalingModel identity(1.0f);
  EXPECT_EQ(reconstruction_score(identity, random_image(1)), 0.0);
}

TEST(Score, MatchesExternalMse) {
  const ScalingModel half(0.5f);
  const Tensor32 img = random_image(2);
  const Tensor32 rec = reconstruct_image(half, img);
  double sum = 0;
  for (std::size_t i = 0; i < img.size(); ++i) sum += (double(img[i]) - rec[i]) * (double(img[i]) - rec[i]);
  EXPECT_NEAR(reconstruction_score(half, img), sum / img.size(), 1e-7);
  EXPECT_EQ(reconstruction_score(half, img), reconstruction_score(half, img));
}

TEST(Score, BatchedEqualsSingle) {
  const models::Cae<float> model(models::ModelConfig::defaults(models::ModelKind::cae, 32));
  std::vector<LabeledImage> imgs;
  for (int i = 0; i < 5; ++i) imgs.push_back({random_image(10 + i), Label::healthy, "x", ""});
  std::vector<const LabeledImage*> ptrs;
  for (auto& i : imgs) ptrs.push_back(&i);
  const std::vector<double> batched = reconstruction_scores(model, ptrs, 2);
  ASSERT_EQ(batched.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(batched[i], reconstruction_score(model, imgs[i].pixels), 1e-9);
}

TEST(Score, CvaeScoringIsDeterministic) {
  const models::Cvae<float> model(models::ModelConfig::defaults(models::ModelKind::cvae, 32));
  const Tensor32 img = random_image(3);
  EXPECT_EQ(reconstruction_score(model, img), reconstruction_score(model, img));
}

TEST(Score, WrongShapeIsShapeError) {
  const models::Cae<float> model(models::ModelConfig::defaults(models::ModelKind::cae, 32));
  EXPECT_THROW(reconstruction_score(model, Tensor32(Shape{3, 8, 8})), ShapeError);
}

// ---- thresholds and verdicts -------------------------------------------------

TEST(Threshold, PercentileExamples) {
  const std::vector<double> five{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(choose_threshold(five, 100), 5.0);
  const std::vector<double> same(7, 0.3);
  EXPECT_DOUBLE_EQ(choose_threshold(same, 95), 0.3);
  std::vector<double> hundred(100);
  std::iota(hundred.begin(), hundred.end(), 1.0);
  std::shuffle(hundred.begin(), hundred.end(), std::mt19937_64(1));
  // Position 0.95 * 99 = 94.05 between order statistics 95 and 96.
  EXPECT_NEAR(choose_threshold(hundred, 95), 95.05, 1e-12);
  EXPECT_NEAR(percentile(hundred, 50), 50.5, 1e-12);
  EXPECT_DOUBLE_EQ(percentile(hundred, 0), 1.0);
}

TEST(Threshold, Errors) {
  const std::vector<double> none;
  const std::vector<double> one{1.0};
  EXPECT_THROW(choose_threshold(none, 95), ContractViolation);
  EXPECT_THROW(choose_threshold(one, 0), ContractViolation);
  EXPECT_THROW(choose_threshold(one, 100.5), ContractViolation);
}

TEST(Classify, BoundaryIsAnomalous) {
  EXPECT_EQ(classify(0.1, 0.5), Verdict::healthy);
  EXPECT_EQ(classify(0.5, 0.5), Verdict::anomalous);
  EXPECT_EQ(classify(0.9, 0.5), Verdict::anomalous);
  EXPECT_EQ(to_string(Verdict::anomalous), "anomalous");
}

// ---- AUC ---------------------------------------------------------------------

double pairwise_auc(const std::vector<double>& h, const std::vector<double>& d) {
  double wins = 0;
  for (double x : d)
    for (double y : h) wins += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return wins / (double(h.size()) * double(d.size()));
}

TEST(Auc, WorkedExamples) {
  const std::vector<double> h{0.1, 0.2, 0.3}, d{0.25, 0.4};
  EXPECT_NEAR(auc_roc(h, d), 5.0 / 6.0, 1e-15);
  const std::vector<double> lo{1, 2}, hi{3, 4};
  EXPECT_EQ(auc_roc(lo, hi), 1.0);
  EXPECT_EQ(auc_roc(hi, lo), 0.0);
  const std::vector<double> flat(4, 0.7);
  EXPECT_EQ(auc_roc(flat, flat), 0.5);
  const std::vector<double> none;
  EXPECT_THROW(auc_roc(none, lo), ContractViolation);
}

TEST(Auc, MatchesPairwiseCountingWithTies) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> h(1 + rng() % 30), d(1 + rng() % 30);
    for (double& v : h) v = double(rng() % 10) / 10.0;
    for (double& v : d) v = double(rng() % 12) / 10.0;
    EXPECT_NEAR(auc_roc(h, d), pairwise_auc(h, d), 1e-12);
  }
}

TEST(Auc, ComplementAndMonotoneInvariance) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> h(25), d(17);
  for (double& v : h) v = u(rng);
  for (double& v : d) v = u(rng) + 0.2;
  EXPECT_NEAR(auc_roc(h, d) + auc_roc(d, h), 1.0, 1e-12);
  std::vector<double> th = h, td = d;
  for (double& v : th) v = std::exp(3 * v) - 2;
  for (double& v : td) v = std::exp(3 * v) - 2;
  EXPECT_EQ(auc_roc(th, td), auc_roc(h, d));
}

TEST(Auc, EqualsTrapezoidAreaOfRocCurve) {
  std::mt19937_64 rng(11);
  std::vector<double> h(20), d(15);
  for (double& v : h) v = double(rng() % 8);
  for (double& v : d) v = double(rng() % 10);
  const std::vector<RocPoint> roc = roc_curve(h, d);
  ASSERT_GE(roc.size(), 2u);
  EXPECT_EQ(roc.front().false_positive_rate, 0.0);
  EXPECT_EQ(roc.front().true_positive_rate, 0.0);
  EXPECT_DOUBLE_EQ(roc.back().false_positive_rate, 1.0);
  EXPECT_DOUBLE_EQ(roc.back().true_positive_rate, 1.0);
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    area += (roc[i].false_positive_rate - roc[i - 1].false_positive_rate) *
            (roc[i].true_positive_rate + roc[i - 1].true_positive_rate) / 2;
    EXPECT_LT(roc[i].threshold, roc[i - 1].threshold);
  }
  EXPECT_NEAR(area, auc_roc(h, d), 1e-12);
}

// ---- reports -----------------------------------------------------------------

std::vector<ScoredImage> scored(const std::vector<double>& h, const std::vector<double>& d) {
  std::vector<ScoredImage> out;
  for (std::size_t i = 0; i < h.size(); ++i) out.push_back({"h" + std::to_string(i), Label::healthy, h[i]});
  for (std::size_t i = 0; i < d.size(); ++i) out.push_back({"d" + std::to_string(i), Label::diseased, d[i]});
  return out;
}

TEST(Report, AggregatesAndGap) {
  const AnomalyReport r = build_report(scored({1.2380e-3, 1.2380e-3}, {2.0052e-3}), 1.5e-3);
  EXPECT_NEAR(r.delta() * 1e3, 0.7672, 1e-12);
  EXPECT_EQ(class_gap(r), r.delta());
  EXPECT_EQ(r.healthy_count, 2u);
  EXPECT_EQ(r.diseased_count, 1u);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.images[2].verdict, Verdict::anomalous);
  EXPECT_EQ(build_report(scored({0.3}, {0.3}), 1.0).delta(), 0.0);
}

TEST(Report, GapMatchesRecomputation) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 0.01);
  std::vector<double> h(30), d(30);
  for (double& v : h) v = u(rng);
  for (double& v : d) v = u(rng) * 2;
  const AnomalyReport r = build_report(scored(h, d), 0.005);
  const double mh = std::accumulate(h.begin(), h.end(), 0.0) / 30, md = std::accumulate(d.begin(), d.end(), 0.0) / 30;
  EXPECT_NEAR(r.delta(), std::abs(md - mh), 1e-15);
  EXPECT_NEAR(r.auc, pairwise_auc(h, d), 1e-12);
}

TEST(Report, MissingClass) {
  const AnomalyReport r = build_report(scored({0.1, 0.2}, {}), 0.15);
  EXPECT_EQ(r.auc, 0.5);
  EXPECT_THROW(r.delta(), ContractViolation);
  EXPECT_THROW(class_gap(r), ContractViolation);
}

TEST(Report, CsvAndJson) {
  TempDir dir;
  const AnomalyReport r = build_report(scored({0.001}, {0.004}), 0.002);
  write_report_csv(dir / "r.csv", r);
  write_report_json(dir / "r.json", r);
  std::ifstream csv(dir / "r.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "path,label,score,verdict");
  std::getline(csv, line);
  EXPECT_TRUE(line.starts_with("h0,healthy,")) << line;
  EXPECT_TRUE(line.ends_with(",healthy")) << line;
  std::getline(csv, line);
  EXPECT_TRUE(line.ends_with(",anomalous")) << line;
  const auto j = nlohmann::json::parse(std::ifstream(dir / "r.json"));
  EXPECT_NEAR(j.at("delta_x1e3").get<double>(), 3.0, 1e-12);
  EXPECT_EQ(j.at("auc_roc").get<double>(), 1.0);
  EXPECT_EQ(nlohmann::json::parse(report_summary_json(r)), j);
}

// ---- heatmaps ----------------------------------------------------------------

TEST(Heatmap, PerfectReconstructionIsAllBlue) {
  const Tensor32 img = random_image(4);
  const Heatmap h = localization_heatmap(img, img);
  for (float v : h.values) EXPECT_EQ(v, 0.0f);
  const Tensor32 rgb = render(h);
  ASSERT_EQ(rgb.shape(), (Shape{3, 32, 32}));
  for (std::size_t i = 0; i < 1024; ++i) {
    EXPECT_EQ(rgb[i], 0.0f);
    EXPECT_EQ(rgb[1024 + i], 0.0f);
    EXPECT_EQ(rgb[2048 + i], 1.0f);
  }
}

TEST(Heatmap, SinglePixelErrorIsYellow) {
  const Tensor32 img = random_image(5);
  Tensor32 rec = img;
  rec[1024 + 7 * 32 + 9] += 0.5f;
  const Heatmap h = localization_heatmap(img, rec);
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) EXPECT_EQ(h.at(y, x), (y == 7 && x == 9) ? 1.0f : 0.0f);
  const Tensor32 rgb = render(h);
  const std::size_t p = 7 * 32 + 9;
  EXPECT_EQ(rgb[p], 1.0f);
  EXPECT_EQ(rgb[1024 + p], 1.0f);
  EXPECT_EQ(rgb[2048 + p], 0.0f);
}

TEST(Heatmap, PixelErrorMatchesLoopReference) {
  const Tensor32 a = random_image(6), b = random_image(7);
  const Heatmap h = pixel_error(a, b);
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t x = 0; x < 32; ++x) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = double(a[(c * 32 + y) * 32 + x]) - b[(c * 32 + y) * 32 + x];
        s += d * d;
      }
      EXPECT_NEAR(h.at(y, x), s / 3, 1e-6);
    }
  }
  EXPECT_THROW(pixel_error(a, Tensor32(Shape{3, 16, 16})), ShapeError);
}

TEST(Heatmap, NormalizationIsIdempotentAndSpansUnitRange) {
  const Heatmap h = localization_heatmap(random_image(8), random_image(9));
  EXPECT_EQ(*std::min_element(h.values.begin(), h.values.end()), 0.0f);
  EXPECT_EQ(*std::max_element(h.values.begin(), h.values.end()), 1.0f);
  const Heatmap twice = normalize(h);
  for (std::size_t i = 0; i < h.values.size(); ++i) EXPECT_NEAR(twice.values[i], h.values[i], 1e-7);
}

Heatmap ramp(std::size_t n) {
  Heatmap h{1, n, std::vector<float>(n)};
  for (std::size_t i = 0; i < n; ++i) h.values[i] = float(i) / float(n - 1);
  return h;
}

TEST(HighContrast, Examples) {
  EXPECT_THROW(high_contrast(ramp(100), 50), ContractViolation);
  EXPECT_THROW(high_contrast(ramp(100), 100), ContractViolation);
  const Heatmap hc = high_contrast(ramp(100), 75);
  for (std::size_t i = 0; i < 100; ++i) {
    if (i >= 75) EXPECT_EQ(hc.values[i], 1.0f) << i;
    else EXPECT_LT(hc.values[i], 1.0f) << i;
  }
  for (std::size_t i = 1; i < 100; ++i) EXPECT_GE(hc.values[i], hc.values[i - 1]);

  Heatmap binary{2, 50, std::vector<float>(100, 0.0f)};
  for (std::size_t i = 0; i < 100; i += 3) binary.values[i] = 1.0f;
  EXPECT_EQ(high_contrast(binary).values, binary.values);
  Heatmap sparse{1, 200, std::vector<float>(200, 0.0f)};
  sparse.values[17] = 1.0f;
  EXPECT_EQ(high_contrast(sparse).values, sparse.values);

  const Heatmap flat{2, 2, std::vector<float>(4, 0.4f)};
  for (float v : high_contrast(flat).values) EXPECT_EQ(v, 0.0f);
}

TEST(Overlap, CountsTopPixelsInsideMask) {
  Heatmap h = ramp(100);
  std::vector<std::uint8_t> mask(100, 0);
  for (std::size_t i = 96; i < 100; ++i) mask[i] = 1;
  // Top 5% = pixels 95..99, four of which are masked.
  EXPECT_DOUBLE_EQ(top_pixel_overlap(h, mask), 0.8);
  EXPECT_DOUBLE_EQ(top_pixel_overlap(h, mask, 0.04), 1.0);
  EXPECT_THROW(top_pixel_overlap(h, std::vector<std::uint8_t>(99)), ShapeError);
}

}  // namespace
}  // namespace leafae::detect
