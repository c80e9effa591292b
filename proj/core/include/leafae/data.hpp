#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leafae/tensor.hpp"

namespace leafae::data {

using leafae::to_string;

enum class Label { healthy, diseased };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

/// An RGB image [3,H,W] with values in [0,1] and its provenance. `tag` names
/// the augmentation that produced it ("" for originals).
struct LabeledImage {
  Tensor32 pixels;
  Label label = Label::healthy;
  std::string source;
  std::string tag;
};

// ---- image files ----------------------------------------------------------

/// Decodes PNG, baseline JPEG or binary PPM (P6) into [3,H,W] floats in
/// [0,1]. Grey and alpha inputs are converted to RGB. Throws FormatError
/// naming the file.
Tensor32 read_image(const std::filesystem::path& path);

/// Writes [3,H,W] values (clamped to [0,1]) as 8-bit RGB.
void write_png(const std::filesystem::path& path, const Tensor32& image);
void write_ppm(const std::filesystem::path& path, const Tensor32& image);

/// Dispatches on the extension (.png, .ppm); anything else is an error.
void write_image(const std::filesystem::path& path, const Tensor32& image);

// ---- transforms -----------------------------------------------------------

/// Bilinear resampling with half-pixel centers and edge clamping.
Tensor32 resize(const Tensor32& image, std::size_t height, std::size_t width);

enum class Augmentation { flip_h, flip_v, rot90, rot180, rot270 };

std::string_view to_string(Augmentation op);
Augmentation parse_augmentation(std::string_view text);
std::vector<Augmentation> all_augmentations();

/// Exact pixel permutation. flip_h mirrors left-right, flip_v top-bottom;
/// rotations are clockwise and need a square image (ContractViolation otherwise).
Tensor32 augment(const Tensor32& image, Augmentation op);

/// Keeps the originals and appends one tagged variant per (image, op), in
/// image-major order. Result size = |train| * (1 + |ops|).
std::vector<LabeledImage> expand_training_set(std::span<const LabeledImage> train,
                                              std::span<const Augmentation> ops);

// ---- splitting ------------------------------------------------------------

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitCounts {
  std::size_t train = 0, validation = 0, test_healthy = 0, test_diseased = 0;
};

/// Healthy pool shuffled (seeded) and cut into validation = round(n*fv),
/// test = round(n*ft), train = rest. Diseased items only go to the test set,
/// truncated to the healthy test count.
SplitCounts split_counts(std::size_t healthy, std::size_t diseased, const SplitFractions& f);

struct DatasetSplit {
  std::vector<LabeledImage> train;
  std::vector<LabeledImage> validation;
  std::vector<LabeledImage> test;  // healthy first, then diseased
  SplitCounts counts;
  std::vector<std::string> warnings;

  std::vector<const LabeledImage*> test_with(Label label) const;
};

/// Assigns pre-built images to a split. Inputs are ordered by source path
/// before the seeded shuffle, so the result does not depend on input order.
DatasetSplit split_dataset(std::vector<LabeledImage> healthy, std::vector<LabeledImage> diseased,
                           const SplitFractions& fractions, std::uint64_t seed);

struct LoadOptions {
  SplitFractions fractions;
  std::uint64_t seed = 0;
  std::size_t image_size = 256;  // every image is resized to size x size
};

/// Reads `<root>/healthy/*` and `<root>/diseased/*` (png, jpg, jpeg, ppm).
/// Throws FormatError for a missing subdirectory or undecodable file.
DatasetSplit load_dataset(const std::filesystem::path& root, const LoadOptions& options);

/// Throws ContractViolation if any image is not labeled healthy.
void require_healthy(std::span<const LabeledImage> images, std::string_view where);
void require_healthy(std::span<const LabeledImage* const> images, std::string_view where);

// ---- synthetic benchmark --------------------------------------------------

struct SyntheticOptions {
  std::size_t size = 32;
  std::uint64_t seed = 0;
  double min_blob_fraction = 0.05;
  double max_blob_fraction = 0.15;
};

struct SyntheticSample {
  LabeledImage image;
  std::vector<std::uint8_t> mask;  // H*W, 1 inside the injected blob
};

/// A textured green leaf tile with seeded veins; diseased tiles get one bright
/// elliptical blob covering a fraction of the area drawn from
/// [min_blob_fraction, max_blob_fraction].
SyntheticSample make_leaf_tile(const SyntheticOptions& options, bool diseased, std::uint64_t seed);

/// `healthy` + `diseased` tiles with independent per-tile seeds.
std::vector<SyntheticSample> make_synthetic_set(const SyntheticOptions& options,
                                                std::size_t healthy, std::size_t diseased);

/// Writes the tiles as PNG under healthy/, diseased/ and masks/ (one PNG
/// mask per diseased tile, same file name).
void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticOptions& options,
                             std::size_t healthy, std::size_t diseased);

}  // namespace leafae::data
