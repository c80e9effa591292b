#include <gtest/gtest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include <jpeglib.h>

#include "leafae/data.hpp"
#include "support.hpp"

namespace leafae::data {
namespace {

using leafae::testing::random_tensor;
using leafae::testing::TempDir;
namespace fs = std::filesystem;

Tensor32 image_from_rows(std::size_t h, std::size_t w, std::initializer_list<float> values) {
  Tensor32 t(Shape{3, h, w});
  std::size_t i = 0;
  for (float v : values) {
    for (std::size_t c = 0; c < 3; ++c) t[c * h * w + i] = v;
    ++i;
  }
  return t;
}

std::vector<float> channel(const Tensor32& img, std::size_t c) {
  const std::size_t n = img.dim(1) * img.dim(2);
  return {img.data().begin() + c * n, img.data().begin() + (c + 1) * n};
}

void write_jpeg(const fs::path& path, const Tensor32& img, int quality = 100) {
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::vector<unsigned char> rgb(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        rgb[(y * w + x) * 3 + c] = static_cast<unsigned char>(std::lround(img[(c * h + y) * w + x] * 255.0f));
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  ASSERT_NE(f, nullptr);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(w);
  cinfo.image_height = static_cast<JDIMENSION>(h);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = rgb.data() + cinfo.next_scanline * w * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

Tensor32 quantized_random(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor32 t(Shape{3, h, w});
  for (float& v : t.data()) v = static_cast<float>(rng() % 256) / 255.0f;
  return t;
}

// ---- labels and image files ----------------------------------------------

TEST(Labels, RoundTrip) {
  EXPECT_EQ(parse_label(to_string(Label::healthy)), Label::healthy);
  EXPECT_EQ(parse_label(to_string(Label::diseased)), Label::diseased);
  EXPECT_THROW(parse_label("sick"), std::invalid_argument);
}

TEST(ImageFiles, PngAndPpmRoundTripExactly) {
  TempDir dir;
  const Tensor32 img = quantized_random(7, 5, 1);
  write_png(dir / "a.png", img);
  write_ppm(dir / "a.ppm", img);
  write_image(dir / "b.PNG", img);
  EXPECT_EQ(read_image(dir / "a.png"), img);
  EXPECT_EQ(read_image(dir / "a.ppm"), img);
  EXPECT_EQ(read_image(dir / "b.PNG"), img);
  EXPECT_THROW(write_image(dir / "a.bmp", img), FormatError);
}

TEST(ImageFiles, JpegDecodesCloseToSource) {
  TempDir dir;
  Tensor32 img(Shape{3, 16, 16});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 256; ++i) img[c * 256 + i] = 0.2f + 0.2f * static_cast<float>(c);
  write_jpeg(dir / "a.jpg", img);
  const Tensor32 back = read_image(dir / "a.jpg");
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(back[i], img[i], 3.0f / 255.0f);
}

TEST(ImageFiles, PpmWithCommentAndSmallMaxval) {
  TempDir dir;
  {
    std::ofstream out(dir / "a.ppm", std::ios::binary);
    out << "P6\n# comment\n2 1\n15\n";
    const unsigned char px[6] = {15, 0, 5, 0, 15, 15};
    out.write(reinterpret_cast<const char*>(px), 6);
  }
  const Tensor32 img = read_image(dir / "a.ppm");
  EXPECT_EQ(img.shape(), (Shape{3, 1, 2}));
  EXPECT_FLOAT_EQ(img[0], 1.0f);
  EXPECT_FLOAT_EQ(img[1], 0.0f);
  EXPECT_NEAR(img[4], 5.0f / 15.0f, 1e-6);
}

TEST(ImageFiles, ErrorsNameTheFile) {
  TempDir dir;
  {
    std::ofstream(dir / "junk.png") << "not an image at all";
    std::ofstream out(dir / "short.ppm", std::ios::binary);
    out << "P6\n4 4\n255\nabc";
  }
  for (const char* name : {"junk.png", "short.ppm", "missing.png"}) {
    try {
      read_image(dir / name);
      ADD_FAILURE() << name << " decoded";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(name), std::string::npos) << e.what();
    }
  }
}

// ---- resize ------------------------------------------------------------------

TEST(Resize, SameSizeIsIdentity) {
  std::mt19937_64 rng(1);
  const Tensor32 img = random_tensor<float>(Shape{3, 9, 6}, rng, 0, 1);
  const Tensor32 out = resize(img, 9, 6);
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_NEAR(out[i], img[i], 1e-6);
}

TEST(Resize, CheckerboardAveragesToHalf) {
  const Tensor32 out = resize(image_from_rows(2, 2, {0, 1, 1, 0}), 1, 1);
  ASSERT_EQ(out.shape(), (Shape{3, 1, 1}));
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.5f);
}

TEST(Resize, RampMatchesHandComputedWeights) {
  // v(y, x) = (x + 4y) / 15. Output centers land midway between source
  // pixels, so every output is the mean of a 2x2 block.
  Tensor32 img(Shape{3, 4, 4});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 4; ++x) img[(c * 4 + y) * 4 + x] = static_cast<float>(x + 4 * y) / 15.0f;
  const Tensor32 out = resize(img, 2, 2);
  const float want[4] = {2.5f / 15, 4.5f / 15, 10.5f / 15, 12.5f / 15};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[c * 4 + i], want[i], 1e-6);
}

TEST(Resize, UpsamplingInterpolatesAndClamps) {
  const Tensor32 out = resize(image_from_rows(1, 2, {0, 1}), 1, 4);
  // Centers at source x = -0.25, 0.25, 0.75, 1.25.
  const float want[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(out[i], want[i], 1e-6);
}

TEST(Resize, StaysInUnitRange) {
  std::mt19937_64 rng(2);
  const Tensor32 img = random_tensor<float>(Shape{3, 13, 7}, rng, 0, 1);
  for (auto [h, w] : {std::pair{32, 32}, std::pair{5, 3}, std::pair{1, 40}}) {
    const Tensor32 out = resize(img, h, w);
    EXPECT_EQ(out.shape(), (Shape{3, std::size_t(h), std::size_t(w)}));
    for (float v : out.data()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

// ---- augmentation ------------------------------------------------------------

TEST(Augment, RotateClockwiseExample) {
  const Tensor32 out = augment(image_from_rows(2, 2, {1, 2, 3, 4}), Augmentation::rot90);
  EXPECT_EQ(channel(out, 0), (std::vector<float>{3, 1, 4, 2}));
  EXPECT_EQ(channel(augment(image_from_rows(2, 2, {1, 2, 3, 4}), Augmentation::flip_h), 1),
            (std::vector<float>{2, 1, 4, 3}));
  EXPECT_EQ(channel(augment(image_from_rows(2, 2, {1, 2, 3, 4}), Augmentation::flip_v), 2),
            (std::vector<float>{3, 4, 1, 2}));
}

TEST(Augment, InvolutionsAndOrders) {
  std::mt19937_64 rng(3);
  const Tensor32 sq = random_tensor<float>(Shape{3, 6, 6}, rng, 0, 1);
  const Tensor32 rect = random_tensor<float>(Shape{3, 4, 7}, rng, 0, 1);
  EXPECT_EQ(augment(augment(rect, Augmentation::flip_h), Augmentation::flip_h), rect);
  EXPECT_EQ(augment(augment(rect, Augmentation::flip_v), Augmentation::flip_v), rect);
  Tensor32 r = sq;
  for (int i = 0; i < 4; ++i) r = augment(r, Augmentation::rot90);
  EXPECT_EQ(r, sq);
  EXPECT_EQ(augment(augment(sq, Augmentation::rot90), Augmentation::rot90), augment(sq, Augmentation::rot180));
  EXPECT_EQ(augment(augment(sq, Augmentation::rot180), Augmentation::rot90), augment(sq, Augmentation::rot270));
  EXPECT_EQ(augment(augment(sq, Augmentation::rot90), Augmentation::rot270), sq);
}

TEST(Augment, PreservesPixelMultiset) {
  std::mt19937_64 rng(4);
  const Tensor32 sq = random_tensor<float>(Shape{3, 5, 5}, rng, 0, 1);
  auto sorted = [](const Tensor32& t) {
    std::vector<float> v(t.data().begin(), t.data().end());
    std::sort(v.begin(), v.end());
    return v;
  };
  for (Augmentation op : all_augmentations()) EXPECT_EQ(sorted(augment(sq, op)), sorted(sq)) << to_string(op);
}

TEST(Augment, RotationNeedsSquareImage) {
  const Tensor32 rect(Shape{3, 2, 3});
  EXPECT_THROW(augment(rect, Augmentation::rot90), ContractViolation);
  EXPECT_THROW(augment(rect, Augmentation::rot270), ContractViolation);
  EXPECT_NO_THROW(augment(rect, Augmentation::flip_h));
}

TEST(Augment, ParsesNames) {
  for (Augmentation op : all_augmentations()) EXPECT_EQ(parse_augmentation(to_string(op)), op);
  EXPECT_EQ(all_augmentations().size(), 5u);
  EXPECT_THROW(parse_augmentation("shear"), std::invalid_argument);
}

std::vector<LabeledImage> tiny_images(std::size_t n, Label label, const std::string& prefix) {
  std::vector<LabeledImage> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor32 px(Shape{3, 2, 2}, static_cast<float>(i % 7) / 7.0f);
    out.push_back({std::move(px), label, prefix + std::to_string(i) + ".png", ""});
  }
  return out;
}

TEST(ExpandTrainingSet, Counts) {
  const auto ten = tiny_images(10, Label::healthy, "h");
  const std::vector<Augmentation> flip{Augmentation::flip_h};
  EXPECT_EQ(expand_training_set(ten, flip).size(), 20u);
  EXPECT_EQ(expand_training_set(ten, {}).size(), 10u);
  const auto all = all_augmentations();
  const auto big = expand_training_set(ten, all);
  EXPECT_EQ(big.size(), 60u);
  std::set<std::pair<std::string, std::string>> ids;
  for (const auto& img : big) ids.emplace(img.source, img.tag);
  EXPECT_EQ(ids.size(), 60u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(big[i].tag, "");
  EXPECT_EQ(big[10].tag, "flip_h");
  EXPECT_EQ(big[10].source, ten[0].source);
  EXPECT_EQ(big[10].pixels, augment(ten[0].pixels, Augmentation::flip_h));
}

// ---- splitting ---------------------------------------------------------------

TEST(Split, CherryProportions) {
  const SplitCounts c = split_counts(851, 200, {0.8, 0.1, 0.1});
  EXPECT_EQ(c.train, 681u);
  EXPECT_EQ(c.validation, 85u);
  EXPECT_EQ(c.test_healthy, 85u);
  EXPECT_EQ(c.test_diseased, 85u);
}

TEST(Split, AssignsImagesAndKeepsDiseasedOutOfTraining) {
  const DatasetSplit s = split_dataset(tiny_images(851, Label::healthy, "h/"), tiny_images(200, Label::diseased, "d/"),
                                       {0.8, 0.1, 0.1}, 42);
  EXPECT_EQ(s.train.size(), 681u);
  EXPECT_EQ(s.validation.size(), 85u);
  EXPECT_EQ(s.test.size(), 170u);
  EXPECT_EQ(s.test_with(Label::healthy).size(), 85u);
  EXPECT_EQ(s.test_with(Label::diseased).size(), 85u);
  for (const auto& img : s.train) EXPECT_EQ(img.label, Label::healthy);
  for (const auto& img : s.validation) EXPECT_EQ(img.label, Label::healthy);
  std::set<std::string> sources;
  for (const auto* part : {&s.train, &s.validation, &s.test})
    for (const auto& img : *part) EXPECT_TRUE(sources.insert(img.source).second) << img.source;
  std::size_t healthy = 0;
  for (const auto& src : sources) healthy += src.starts_with("h/");
  EXPECT_EQ(healthy, 851u);
  EXPECT_TRUE(s.warnings.empty());
}

TEST(Split, SeedDeterministicAndOrderIndependent) {
  auto names = [](const DatasetSplit& s) {
    std::vector<std::string> out;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& img : *part) out.push_back(img.source);
    return out;
  };
  auto h = tiny_images(50, Label::healthy, "h");
  auto d = tiny_images(20, Label::diseased, "d");
  const auto a = names(split_dataset(h, d, {}, 7));
  std::reverse(h.begin(), h.end());
  std::reverse(d.begin(), d.end());
  EXPECT_EQ(names(split_dataset(h, d, {}, 7)), a);
  EXPECT_NE(names(split_dataset(h, d, {}, 8)), a);
}

TEST(Split, DegenerateInputsWarn) {
  const DatasetSplit none = split_dataset(tiny_images(10, Label::healthy, "h"), {}, {}, 1);
  EXPECT_EQ(none.counts.train + none.counts.validation + none.counts.test_healthy, 10u);
  EXPECT_EQ(none.test_with(Label::diseased).size(), 0u);
  EXPECT_FALSE(none.warnings.empty());
  const DatasetSplit few = split_dataset(tiny_images(30, Label::healthy, "h"), tiny_images(1, Label::diseased, "d"), {}, 1);
  EXPECT_EQ(few.counts.test_diseased, 1u);
  EXPECT_FALSE(few.warnings.empty());
}

TEST(Split, RejectsBadFractionsAndMislabeledInput) {
  EXPECT_THROW(split_counts(10, 0, {0.5, 0.4, 0.4}), ContractViolation);
  EXPECT_THROW(split_counts(10, 0, {1.2, -0.1, -0.1}), ContractViolation);
  EXPECT_THROW(split_dataset(tiny_images(5, Label::diseased, "x"), {}, {}, 0), ContractViolation);
}

TEST(RequireHealthy, NamesTheOffendingImage) {
  auto imgs = tiny_images(3, Label::healthy, "h");
  EXPECT_NO_THROW(require_healthy(imgs, "train"));
  imgs[1].label = Label::diseased;
  try {
    require_healthy(imgs, "train");
    FAIL();
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("h1.png"), std::string::npos) << e.what();
  }
  std::vector<const LabeledImage*> ptrs{&imgs[0], &imgs[1]};
  EXPECT_THROW(require_healthy(ptrs, "batch"), ContractViolation);
}

// ---- directory loading ---------------------------------------------------------

TEST(LoadDataset, ReadsMixedFormatsAndResizes) {
  TempDir dir;
  fs::create_directories(dir / "healthy");
  fs::create_directories(dir / "diseased");
  for (int i = 0; i < 6; ++i) write_png(dir / ("healthy/h" + std::to_string(i) + ".png"), quantized_random(12, 10, i));
  write_ppm(dir / "healthy/h6.ppm", quantized_random(8, 8, 6));
  write_jpeg(dir / "healthy/h7.jpg", quantized_random(8, 8, 7));
  write_jpeg(dir / "healthy/h8.jpeg", quantized_random(8, 8, 8));
  write_png(dir / "healthy/h9.png", quantized_random(4, 4, 9));
  std::ofstream(dir / "healthy/notes.txt") << "ignored";
  write_png(dir / "diseased/d0.png", quantized_random(5, 5, 10));
  write_png(dir / "diseased/d1.png", quantized_random(5, 5, 11));

  LoadOptions opts;
  opts.image_size = 16;
  opts.seed = 3;
  const DatasetSplit s = load_dataset(dir.path(), opts);
  EXPECT_EQ(s.counts.train + s.counts.validation + s.counts.test_healthy, 10u);
  EXPECT_EQ(s.counts.validation, 1u);
  EXPECT_EQ(s.counts.test_healthy, 1u);
  EXPECT_EQ(s.counts.test_diseased, 1u);
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (const auto& img : *part) {
      EXPECT_EQ(img.pixels.shape(), (Shape{3, 16, 16}));
      for (float v : img.pixels.data()) {
        ASSERT_GE(v, 0.0f);
        ASSERT_LE(v, 1.0f);
      }
    }
  }
}

TEST(LoadDataset, MissingDirectoryAndBadFileAreErrors) {
  TempDir dir;
  fs::create_directories(dir / "healthy");
  EXPECT_THROW(load_dataset(dir.path(), {}), FormatError);
  fs::create_directories(dir / "diseased");
  write_png(dir / "healthy/ok.png", quantized_random(4, 4, 1));
  std::ofstream(dir / "healthy/broken.png") << "garbage";
  try {
    load_dataset(dir.path(), {});
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("broken.png"), std::string::npos) << e.what();
  }
}

// ---- synthetic benchmark -------------------------------------------------------

TEST(Synthetic, BlobCoversRequestedFraction) {
  const SyntheticOptions opts{.size = 32, .seed = 5};
  for (std::uint64_t s = 0; s < 40; ++s) {
    const SyntheticSample tile = make_leaf_tile(opts, true, s);
    ASSERT_EQ(tile.mask.size(), 32u * 32u);
    const double frac = static_cast<double>(std::count(tile.mask.begin(), tile.mask.end(), 1)) / 1024.0;
    EXPECT_GE(frac, 0.04) << s;
    EXPECT_LE(frac, 0.16) << s;
    EXPECT_EQ(tile.image.label, Label::diseased);
  }
  const SyntheticSample healthy = make_leaf_tile(opts, false, 1);
  EXPECT_EQ(std::count(healthy.mask.begin(), healthy.mask.end(), 1), 0);
  EXPECT_EQ(healthy.image.label, Label::healthy);
}

TEST(Synthetic, TilesAreGreenAndBlobIsBright) {
  const SyntheticSample tile = make_leaf_tile({.size = 32, .seed = 2}, true, 3);
  const Tensor32& px = tile.image.pixels;
  double g_leaf = 0, r_leaf = 0, bright_blob = 0;
  std::size_t n_leaf = 0, n_blob = 0;
  for (std::size_t i = 0; i < 1024; ++i) {
    if (tile.mask[i]) {
      bright_blob += px[i] + px[1024 + i] + px[2048 + i];
      ++n_blob;
    } else {
      r_leaf += px[i];
      g_leaf += px[1024 + i];
      ++n_leaf;
    }
  }
  EXPECT_GT(g_leaf / n_leaf, r_leaf / n_leaf);
  EXPECT_GT(bright_blob / n_blob, 1.5);
}

TEST(Synthetic, SeededAndDistinct) {
  const SyntheticOptions opts{.size = 32, .seed = 9};
  EXPECT_EQ(make_leaf_tile(opts, false, 4).image.pixels, make_leaf_tile(opts, false, 4).image.pixels);
  EXPECT_NE(make_leaf_tile(opts, false, 4).image.pixels, make_leaf_tile(opts, false, 5).image.pixels);
  const auto set = make_synthetic_set(opts, 5, 3);
  ASSERT_EQ(set.size(), 8u);
  EXPECT_EQ(set[4].image.label, Label::healthy);
  EXPECT_EQ(set[5].image.label, Label::diseased);
}

TEST(Synthetic, WrittenDatasetLoadsBack) {
  TempDir dir;
  write_synthetic_dataset(dir.path(), {.size = 32, .seed = 1}, 12, 4);
  EXPECT_TRUE(fs::exists(dir / "masks"));
  LoadOptions opts;
  opts.image_size = 32;
  const DatasetSplit s = load_dataset(dir.path(), opts);
  EXPECT_EQ(s.counts.train + s.counts.validation + s.counts.test_healthy, 12u);
  EXPECT_EQ(std::distance(fs::directory_iterator(dir / "masks"), fs::directory_iterator()), 4);
}

}  // namespace
}  // namespace leafae::data
