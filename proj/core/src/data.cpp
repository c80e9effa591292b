#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <tuple>

#include "leafae/data.hpp"

namespace leafae::data {

namespace fs = std::filesystem;

std::string_view to_string(Label label) {
  return label == Label::healthy ? "healthy" : "diseased";
}

Label parse_label(std::string_view text) {
  if (text == "healthy") return Label::healthy;
  if (text == "diseased") return Label::diseased;
  throw std::invalid_argument("unknown label '" + std::string(text) + "'");
}

namespace {

void require_image(const Tensor32& image, const char* what) {
  if (image.rank() != 3 || image.dim(0) == 0 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw ShapeError(std::string(what) + ": expected a [C,H,W] image, got " +
                     to_string(image.shape()));
  }
}

}  // namespace

Tensor32 resize(const Tensor32& image, std::size_t height, std::size_t width) {
  require_image(image, "resize");
  if (height == 0 || width == 0) throw ShapeError("resize: target extents must be positive");
  const std::size_t channels = image.dim(0), in_h = image.dim(1), in_w = image.dim(2);
  if (in_h == height && in_w == width) return image;

  struct Tap {
    std::size_t lo, hi;
    float w;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double s = (static_cast<double>(i) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(in - 1));
      const std::size_t lo = static_cast<std::size_t>(std::floor(s));
      const std::size_t hi = std::min(lo + 1, in - 1);
      t[i] = Tap{lo, hi, static_cast<float>(s - static_cast<double>(lo))};
    }
    return t;
  };
  const std::vector<Tap> ty = taps(in_h, height), tx = taps(in_w, width);

  Tensor32 out(Shape{channels, height, width});
  for (std::size_t c = 0; c < channels; ++c) {
    const float* plane = image.data().data() + c * in_h * in_w;
    float* dst = out.data().data() + c * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const Tap& a = ty[y];
      for (std::size_t x = 0; x < width; ++x) {
        const Tap& b = tx[x];
        const float top = plane[a.lo * in_w + b.lo] * (1 - b.w) + plane[a.lo * in_w + b.hi] * b.w;
        const float bot = plane[a.hi * in_w + b.lo] * (1 - b.w) + plane[a.hi * in_w + b.hi] * b.w;
        dst[y * width + x] = std::clamp(top * (1 - a.w) + bot * a.w, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

std::string_view to_string(Augmentation op) {
  switch (op) {
    case Augmentation::flip_h: return "flip_h";
    case Augmentation::flip_v: return "flip_v";
    case Augmentation::rot90: return "rot90";
    case Augmentation::rot180: return "rot180";
    case Augmentation::rot270: return "rot270";
  }
  return "?";
}

Augmentation parse_augmentation(std::string_view text) {
  for (Augmentation op : all_augmentations()) {
    if (to_string(op) == text) return op;
  }
  throw std::invalid_argument("unknown augmentation '" + std::string(text) + "'");
}

std::vector<Augmentation> all_augmentations() {
  return {Augmentation::flip_h, Augmentation::flip_v, Augmentation::rot90, Augmentation::rot180,
          Augmentation::rot270};
}

Tensor32 augment(const Tensor32& image, Augmentation op) {
  require_image(image, "augment");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  const bool rotation = op == Augmentation::rot90 || op == Augmentation::rot180 ||
                        op == Augmentation::rot270;
  if (rotation && h != w) {
    throw ContractViolation("augment: " + std::string(to_string(op)) + " needs a square image, got " +
                            to_string(image.shape()));
  }
  Tensor32 out(image.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    const float* src = image.data().data() + c * h * w;
    float* dst = out.data().data() + c * h * w;
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        std::size_t si = i, sj = j;
        switch (op) {
          case Augmentation::flip_h: sj = w - 1 - j; break;
          case Augmentation::flip_v: si = h - 1 - i; break;
          case Augmentation::rot90: si = h - 1 - j; sj = i; break;
          case Augmentation::rot180: si = h - 1 - i; sj = w - 1 - j; break;
          case Augmentation::rot270: si = j; sj = w - 1 - i; break;
        }
        dst[i * w + j] = src[si * w + sj];
      }
    }
  }
  return out;
}

std::vector<LabeledImage> expand_training_set(std::span<const LabeledImage> train,
                                              std::span<const Augmentation> ops) {
  std::vector<LabeledImage> out;
  out.reserve(train.size() * (1 + ops.size()));
  out.assign(train.begin(), train.end());
  for (const LabeledImage& img : train) {
    for (Augmentation op : ops) {
      LabeledImage v{augment(img.pixels, op), img.label, img.source,
                     img.tag.empty() ? std::string(to_string(op))
                                     : img.tag + "+" + std::string(to_string(op))};
      out.push_back(std::move(v));
    }
  }
  return out;
}

namespace {

void validate_fractions(const SplitFractions& f) {
  for (double v : {f.train, f.validation, f.test}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractViolation("split fractions must lie in [0,1]");
  }
  if (std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ContractViolation("split fractions must sum to 1");
  }
}

}  // namespace

SplitCounts split_counts(std::size_t healthy, std::size_t diseased, const SplitFractions& f) {
  validate_fractions(f);
  const double n = static_cast<double>(healthy);
  SplitCounts c;
  c.validation = static_cast<std::size_t>(std::llround(n * f.validation));
  c.test_healthy = static_cast<std::size_t>(std::llround(n * f.test));
  if (c.validation + c.test_healthy > healthy) c.test_healthy = healthy - c.validation;
  c.train = healthy - c.validation - c.test_healthy;
  c.test_diseased = std::min(diseased, c.test_healthy);
  return c;
}

std::vector<const LabeledImage*> DatasetSplit::test_with(Label label) const {
  std::vector<const LabeledImage*> out;
  for (const LabeledImage& img : test) {
    if (img.label == label) out.push_back(&img);
  }
  return out;
}

DatasetSplit split_dataset(std::vector<LabeledImage> healthy, std::vector<LabeledImage> diseased,
                           const SplitFractions& fractions, std::uint64_t seed) {
  for (const auto& img : healthy) {
    if (img.label != Label::healthy) throw ContractViolation("healthy pool holds " + img.source);
  }
  for (const auto& img : diseased) {
    if (img.label != Label::diseased) throw ContractViolation("diseased pool holds " + img.source);
  }
  auto by_source = [](const LabeledImage& a, const LabeledImage& b) {
    return std::tie(a.source, a.tag) < std::tie(b.source, b.tag);
  };
  std::sort(healthy.begin(), healthy.end(), by_source);
  std::sort(diseased.begin(), diseased.end(), by_source);

  DatasetSplit split;
  split.counts = split_counts(healthy.size(), diseased.size(), fractions);
  std::mt19937_64 rng(seed);
  std::shuffle(healthy.begin(), healthy.end(), rng);
  std::shuffle(diseased.begin(), diseased.end(), rng);

  const SplitCounts& c = split.counts;
  auto it = std::make_move_iterator(healthy.begin());
  split.validation.assign(it, it + static_cast<std::ptrdiff_t>(c.validation));
  it += static_cast<std::ptrdiff_t>(c.validation);
  split.test.assign(it, it + static_cast<std::ptrdiff_t>(c.test_healthy));
  it += static_cast<std::ptrdiff_t>(c.test_healthy);
  split.train.assign(it, std::make_move_iterator(healthy.end()));
  for (std::size_t i = 0; i < c.test_diseased; ++i) split.test.push_back(std::move(diseased[i]));

  if (diseased.empty()) {
    split.warnings.push_back("no diseased images: the test set holds healthy images only");
  } else if (diseased.size() < c.test_healthy) {
    split.warnings.push_back("only " + std::to_string(diseased.size()) + " diseased images for " +
                             std::to_string(c.test_healthy) + " healthy test images");
  }
  if (split.train.empty()) split.warnings.push_back("the training split is empty");
  return split;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".ppm";
}

std::vector<LabeledImage> load_class(const fs::path& dir, Label label, std::size_t size) {
  if (!fs::is_directory(dir)) throw FormatError("missing dataset directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledImage> out;
  out.reserve(files.size());
  for (const fs::path& f : files) {
    Tensor32 px = read_image(f);
    out.push_back(LabeledImage{resize(px, size, size), label, f.string(), ""});
  }
  return out;
}

}  // namespace

DatasetSplit load_dataset(const fs::path& root, const LoadOptions& options) {
  if (options.image_size == 0) throw ContractViolation("image size must be positive");
  validate_fractions(options.fractions);
  std::vector<LabeledImage> healthy = load_class(root / "healthy", Label::healthy, options.image_size);
  std::vector<LabeledImage> diseased =
      load_class(root / "diseased", Label::diseased, options.image_size);
  return split_dataset(std::move(healthy), std::move(diseased), options.fractions, options.seed);
}

void require_healthy(std::span<const LabeledImage> images, std::string_view where) {
  for (const LabeledImage& img : images) {
    if (img.label != Label::healthy) {
      throw ContractViolation("diseased image " + img.source + " in " + std::string(where));
    }
  }
}

void require_healthy(std::span<const LabeledImage* const> images, std::string_view where) {
  for (const LabeledImage* img : images) {
    if (img->label != Label::healthy) {
      throw ContractViolation("diseased image " + img->source + " in " + std::string(where));
    }
  }
}

}  // namespace leafae::data
