#include <algorithm>
#include <cstdio>
#include <cmath>
#include <numbers>
#include <random>

#include "leafae/data.hpp"

namespace leafae::data {

namespace {

struct Rgb {
  float r, g, b;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Distance from (x, y) to the segment a-b.
double segment_distance(double x, double y, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double px = ax + t * dx - x, py = ay + t * dy - y;
  return std::sqrt(px * px + py * py);
}

struct Segment {
  double ax, ay, bx, by, width;
};

}  // namespace

SyntheticSample make_leaf_tile(const SyntheticOptions& options, bool diseased, std::uint64_t seed) {
  if (options.size < 8) throw ContractViolation("synthetic tiles need size >= 8");
  if (!(options.min_blob_fraction > 0 && options.min_blob_fraction <= options.max_blob_fraction &&
        options.max_blob_fraction < 0.5)) {
    throw ContractViolation("blob fractions must satisfy 0 < min <= max < 0.5");
  }
  const std::size_t n = options.size;
  const double s = static_cast<double>(n);
  std::mt19937_64 rng(seed);

  // Base leaf color and a smooth two-wave shading pattern.
  const Rgb base{static_cast<float>(uniform(rng, 0.16, 0.26)),
                 static_cast<float>(uniform(rng, 0.42, 0.54)),
                 static_cast<float>(uniform(rng, 0.10, 0.18))};
  const double f1 = uniform(rng, 0.5, 1.5), f2 = uniform(rng, 0.5, 1.5);
  const double p1 = uniform(rng, 0, 2 * std::numbers::pi), p2 = uniform(rng, 0, 2 * std::numbers::pi);
  const double shade = uniform(rng, 0.04, 0.08);

  // A midrib through the tile and lateral veins branching off it.
  std::vector<Segment> veins;
  const double angle = uniform(rng, 0, std::numbers::pi);
  const double cx = s / 2 + uniform(rng, -s / 8, s / 8), cy = s / 2 + uniform(rng, -s / 8, s / 8);
  const double ux = std::cos(angle), uy = std::sin(angle);
  veins.push_back({cx - ux * s, cy - uy * s, cx + ux * s, cy + uy * s, s / 32.0 * 1.2});
  const int laterals = std::uniform_int_distribution<int>(3, 5)(rng);
  for (int k = 0; k < laterals; ++k) {
    const double t = uniform(rng, -0.45, 0.45) * s;
    const double ox = cx + ux * t, oy = cy + uy * t;
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    const double a = angle + side * uniform(rng, 0.6, 1.0);
    const double len = uniform(rng, 0.3, 0.6) * s;
    veins.push_back({ox, oy, ox + std::cos(a) * len, oy + std::sin(a) * len, s / 32.0 * 0.7});
  }

  std::normal_distribution<double> grain(0.0, 0.015);
  SyntheticSample out;
  out.image.pixels = Tensor32(Shape{3, n, n});
  out.image.label = diseased ? Label::diseased : Label::healthy;
  out.mask.assign(n * n, 0);
  float* px = out.image.pixels.data().data();
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) / s, fy = (static_cast<double>(y) + 0.5) / s;
      double k = 1.0 + shade * std::sin(2 * std::numbers::pi * f1 * fx + p1) +
                 shade * std::sin(2 * std::numbers::pi * f2 * fy + p2);
      double vein = 0.0;
      for (const Segment& v : veins) {
        const double d = segment_distance(x + 0.5, y + 0.5, v.ax, v.ay, v.bx, v.by);
        vein = std::max(vein, std::exp(-(d * d) / (2 * v.width * v.width)));
      }
      const double g = grain(rng);
      const double r = base.r * k + 0.10 * vein + g;
      const double gg = base.g * k + 0.18 * vein + g;
      const double b = base.b * k + 0.06 * vein + g;
      const std::size_t i = y * n + x;
      px[i] = static_cast<float>(std::clamp(r, 0.0, 1.0));
      px[n * n + i] = static_cast<float>(std::clamp(gg, 0.0, 1.0));
      px[2 * n * n + i] = static_cast<float>(std::clamp(b, 0.0, 1.0));
    }
  }

  if (diseased) {
    const double fraction = uniform(rng, options.min_blob_fraction, options.max_blob_fraction);
    const double aspect = uniform(rng, 0.6, 1.0);
    const double area = fraction * s * s;
    const double a = std::sqrt(area / (std::numbers::pi * aspect));  // semi-major
    const double b = a * aspect;
    const double theta = uniform(rng, 0, std::numbers::pi);
    const double margin = a + 1.0;
    const double bx = uniform(rng, margin, s - margin), by = uniform(rng, margin, s - margin);
    const Rgb spot{static_cast<float>(uniform(rng, 0.85, 0.95)),
                   static_cast<float>(uniform(rng, 0.75, 0.88)),
                   static_cast<float>(uniform(rng, 0.20, 0.35))};
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = x + 0.5 - bx, dy = y + 0.5 - by;
        const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
        if (u * u + v * v > 1.0) continue;
        const std::size_t i = y * n + x;
        out.mask[i] = 1;
        const double g = grain(rng);
        px[i] = static_cast<float>(std::clamp(spot.r + g, 0.0, 1.0));
        px[n * n + i] = static_cast<float>(std::clamp(spot.g + g, 0.0, 1.0));
        px[2 * n * n + i] = static_cast<float>(std::clamp(spot.b + g, 0.0, 1.0));
      }
    }
  }
  return out;
}

std::vector<SyntheticSample> make_synthetic_set(const SyntheticOptions& options,
                                                std::size_t healthy, std::size_t diseased) {
  std::vector<SyntheticSample> out;
  out.reserve(healthy + diseased);
  std::mt19937_64 seeds(options.seed);
  char name[64];
  for (std::size_t i = 0; i < healthy + diseased; ++i) {
    const bool sick = i >= healthy;
    SyntheticSample s = make_leaf_tile(options, sick, seeds());
    std::snprintf(name, sizeof name, "%s/tile_%04zu.png", sick ? "diseased" : "healthy",
                  sick ? i - healthy : i);
    s.image.source = name;
    out.push_back(std::move(s));
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options,
                             std::size_t healthy, std::size_t diseased) {
  namespace fs = std::filesystem;
  for (const char* sub : {"healthy", "diseased", "masks"}) fs::create_directories(root / sub);
  const std::size_t n = options.size;
  for (const SyntheticSample& s : make_synthetic_set(options, healthy, diseased)) {
    write_png(root / s.image.source, s.image.pixels);
    if (s.image.label == Label::diseased) {
      Tensor32 mask(Shape{3, n, n});
      for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n * n; ++i) mask[c * n * n + i] = s.mask[i] ? 1.0f : 0.0f;
      }
      write_png(root / "masks" / fs::path(s.image.source).filename(), mask);
    }
  }
}

}  // namespace leafae::data
