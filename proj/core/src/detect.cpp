#include "leafae/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <limits>
#include <numeric>

#include "leafae/optim.hpp"

namespace leafae::detect {

namespace {

double image_mse(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

template <typename T>
Tensor32 to_float(const Tensor<T>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<float>();
  }
}

}  // namespace

template <typename T>
Tensor32 reconstruct_image(const models::Autoencoder<T>& model, const Tensor32& image) {
  if constexpr (std::is_same_v<T, float>) {
    return model.reconstruct(image);
  } else {
    return to_float(model.reconstruct(image.cast<T>()));
  }
}

template <typename T>
double reconstruction_score(const models::Autoencoder<T>& model, const Tensor32& image) {
  const Tensor32 rec = reconstruct_image(model, image);
  require_same_shape(image.shape(), rec.shape(), "reconstruction_score");
  return image_mse(image.data(), rec.data());
}

template <typename T>
std::vector<double> reconstruction_scores(const models::Autoencoder<T>& model,
                                          std::span<const data::LabeledImage* const> images,
                                          std::size_t batch_size) {
  if (batch_size == 0) throw ContractViolation("reconstruction_scores: batch size must be positive");
  std::vector<double> scores;
  scores.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += batch_size) {
    const std::size_t end = std::min(images.size(), begin + batch_size);
    const auto chunk = images.subspan(begin, end - begin);
    const Tensor32 rec = to_float(model.reconstruct(optim::stack_images<T>(chunk)));
    const std::size_t per = chunk.front()->pixels.size();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      scores.push_back(image_mse(chunk[i]->pixels.data(), rec.data().subspan(i * per, per)));
    }
  }
  return scores;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw ContractViolation("percentile of an empty list");
  if (!(p >= 0.0 && p <= 100.0)) throw ContractViolation("percentile must lie in [0,100]");
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const double pos = p / 100.0 * static_cast<double>(s.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return frac == 0.0 ? s[lo] : s[lo] + frac * (s[hi] - s[lo]);
}

double choose_threshold(std::span<const double> validation_scores, double p) {
  if (validation_scores.empty()) throw ContractViolation("choose_threshold: no validation scores");
  if (!(p > 0.0 && p <= 100.0)) throw ContractViolation("choose_threshold: percentile must lie in (0,100]");
  return percentile(validation_scores, p);
}

std::string_view to_string(Verdict v) { return v == Verdict::healthy ? "healthy" : "anomalous"; }

Verdict classify(double score, double threshold) {
  return score < threshold ? Verdict::healthy : Verdict::anomalous;
}

double auc_roc(std::span<const double> healthy, std::span<const double> diseased) {
  if (healthy.empty() || diseased.empty()) throw ContractViolation("auc_roc needs both classes");
  std::vector<double> h(healthy.begin(), healthy.end());
  std::sort(h.begin(), h.end());
  // Twice the Mann-Whitney U statistic, so ties stay integral.
  std::uint64_t twice_u = 0;
  for (double d : diseased) {
    const auto lo = std::lower_bound(h.begin(), h.end(), d);
    const auto hi = std::upper_bound(lo, h.end(), d);
    twice_u += 2 * static_cast<std::uint64_t>(lo - h.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice_u) /
         (2.0 * static_cast<double>(healthy.size()) * static_cast<double>(diseased.size()));
}

std::vector<RocPoint> roc_curve(std::span<const double> healthy, std::span<const double> diseased) {
  if (healthy.empty() || diseased.empty()) throw ContractViolation("roc_curve needs both classes");
  std::vector<double> thresholds(healthy.begin(), healthy.end());
  thresholds.insert(thresholds.end(), diseased.begin(), diseased.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::vector<RocPoint> out{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  for (double t : thresholds) {
    auto rate = [t](std::span<const double> xs) {
      return static_cast<double>(std::count_if(xs.begin(), xs.end(), [t](double s) { return s >= t; })) /
             static_cast<double>(xs.size());
    };
    out.push_back({t, rate(healthy), rate(diseased)});
  }
  return out;
}

double AnomalyReport::delta() const {
  if (healthy_count == 0 || diseased_count == 0) {
    throw ContractViolation("class gap needs healthy and diseased scores");
  }
  return std::abs(mean_diseased - mean_healthy);
}

AnomalyReport build_report(std::vector<ScoredImage> images, double threshold) {
  if (!std::isfinite(threshold)) throw ContractViolation("threshold must be finite");
  AnomalyReport r;
  r.threshold = threshold;
  std::vector<double> h, d;
  std::size_t correct = 0;
  for (ScoredImage& img : images) {
    img.verdict = classify(img.score, threshold);
    const bool sick = img.label == data::Label::diseased;
    (sick ? d : h).push_back(img.score);
    if ((img.verdict == Verdict::anomalous) == sick) ++correct;
  }
  r.images = std::move(images);
  r.healthy_count = h.size();
  r.diseased_count = d.size();
  auto mean = [](const std::vector<double>& xs) {
    return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  };
  r.mean_healthy = mean(h);
  r.mean_diseased = mean(d);
  r.auc = (h.empty() || d.empty()) ? 0.5 : auc_roc(h, d);
  r.accuracy = r.images.empty() ? 0.0
                                : static_cast<double>(correct) / static_cast<double>(r.images.size());
  return r;
}

double class_gap(const AnomalyReport& report) { return report.delta(); }

void write_report_csv(const std::filesystem::path& path, const AnomalyReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << "path,label,score,verdict\n";
  char buf[64];
  for (const ScoredImage& img : report.images) {
    std::snprintf(buf, sizeof buf, "%.9g", img.score);
    out << img.path << ',' << data::to_string(img.label) << ',' << buf << ','
        << to_string(img.verdict) << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string report_summary_json(const AnomalyReport& report) {
  nlohmann::ordered_json j;
  j["healthy_count"] = report.healthy_count;
  j["diseased_count"] = report.diseased_count;
  j["mean_mse_healthy"] = report.mean_healthy;
  j["mean_mse_diseased"] = report.mean_diseased;
  j["mean_mse_healthy_x1e3"] = report.mean_healthy * 1e3;
  j["mean_mse_diseased_x1e3"] = report.mean_diseased * 1e3;
  if (report.healthy_count > 0 && report.diseased_count > 0) {
    j["delta"] = report.delta();
    j["delta_x1e3"] = report.delta() * 1e3;
  } else {
    j["delta"] = nullptr;
    j["delta_x1e3"] = nullptr;
  }
  j["auc_roc"] = report.auc;
  j["threshold"] = report.threshold;
  j["accuracy"] = report.accuracy;
  return j.dump(2);
}

void write_report_json(const std::filesystem::path& path, const AnomalyReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write summary " + path.string());
  out << report_summary_json(report) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Heatmap pixel_error(const Tensor32& image, const Tensor32& reconstruction) {
  require_same_shape(image.shape(), reconstruction.shape(), "pixel_error");
  if (image.rank() != 3) throw ShapeError("pixel_error expects [C,H,W], got " + to_string(image.shape()));
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Heatmap m{h, w, std::vector<float>(h * w, 0.0f)};
  for (std::size_t i = 0; i < h * w; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = static_cast<double>(image[k * h * w + i]) - reconstruction[k * h * w + i];
      sum += d * d;
    }
    m.values[i] = static_cast<float>(sum / static_cast<double>(c));
  }
  return m;
}

Heatmap normalize(const Heatmap& map) {
  Heatmap out = map;
  if (map.values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const float mn = *lo, mx = *hi;
  if (!(mx > mn)) {
    std::fill(out.values.begin(), out.values.end(), 0.0f);
    return out;
  }
  for (float& v : out.values) v = (v - mn) / (mx - mn);
  return out;
}

Heatmap localization_heatmap(const Tensor32& image, const Tensor32& reconstruction) {
  return normalize(pixel_error(image, reconstruction));
}

Tensor32 render(const Heatmap& map) {
  const std::size_t n = map.height * map.width;
  Tensor32 out(Shape{3, map.height, map.width});
  for (std::size_t i = 0; i < n; ++i) {
    const float v = std::clamp(map.values[i], 0.0f, 1.0f);
    out[i] = v;
    out[n + i] = v;
    out[2 * n + i] = 1.0f - v;
  }
  return out;
}

Heatmap high_contrast(const Heatmap& map, double p) {
  if (!(p > 50.0 && p < 100.0)) {
    throw ContractViolation("high-contrast percentile must lie strictly between 50 and 100");
  }
  Heatmap out = map;
  if (map.values.empty()) return out;
  const std::vector<double> v(map.values.begin(), map.values.end());
  const double clip = percentile(v, p);
  const double mn = *std::min_element(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.values[i] = clip > mn ? static_cast<float>((std::min(v[i], clip) - mn) / (clip - mn))
                              : (v[i] > mn ? 1.0f : 0.0f);
  }
  return out;
}

double top_pixel_overlap(const Heatmap& map, std::span<const std::uint8_t> mask, double fraction) {
  if (mask.size() != map.values.size()) throw ShapeError("top_pixel_overlap: mask size mismatch");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractViolation("fraction must lie in (0,1]");
  const std::size_t n = map.values.size();
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * n)));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return map.values[a] > map.values[b]; });
  std::size_t inside = 0;
  for (std::size_t i = 0; i < k; ++i) inside += mask[idx[i]] ? 1 : 0;
  return static_cast<double>(inside) / static_cast<double>(k);
}

#define LEAFAE_INSTANTIATE_DETECT(T)                                                            \
  template Tensor32 reconstruct_image<T>(const models::Autoencoder<T>&, const Tensor32&);       \
  template double reconstruction_score<T>(const models::Autoencoder<T>&, const Tensor32&);      \
  template std::vector<double> reconstruction_scores<T>(                                        \
      const models::Autoencoder<T>&, std::span<const data::LabeledImage* const>, std::size_t);

LEAFAE_INSTANTIATE_DETECT(float)
LEAFAE_INSTANTIATE_DETECT(double)

}  // namespace leafae::detect
