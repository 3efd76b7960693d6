#include <gtest/gtest.h>

#include <fstream>
#include <vector>

#include "pinadapt/dataset.hpp"
#include "pinadapt/image_io.hpp"
#include "pinadapt/toy_data.hpp"
#include "test_support.hpp"

using namespace pinadapt;
using testing_support::TempDir;

namespace {

RgbImage noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  RgbImage img(h, w);
  for (auto& v : img.pixels) v = static_cast<std::uint8_t>(rng.index(256));
  return img;
}

void write_pair(const std::filesystem::path& root, const std::string& split, const std::string& stem,
                const RgbImage& img, const LabelMask& mask) {
  std::filesystem::create_directories(root / "images" / split);
  std::filesystem::create_directories(root / "labels" / split);
  write_rgb(root / "images" / split / (stem + ".ppm"), img);
  write_mask(root / "labels" / split / (stem + ".pgm"), mask);
}

DatasetSpec small_spec(const std::filesystem::path& root, std::size_t k = 3) {
  DatasetSpec s;
  s.root = root;
  s.split = "train";
  s.num_classes = k;
  return s;
}

}  // namespace

TEST(ImageIo, PnmRoundTrip) {
  TempDir dir("img");
  const RgbImage img = noise_image(7, 5, 1);
  write_rgb(dir / "a.ppm", img);
  EXPECT_EQ(read_rgb(dir / "a.ppm"), img);
  LabelMask m(3, 4, 2);
  m.at(1, 2) = 255;
  write_mask(dir / "m.pgm", m);
  EXPECT_EQ(read_mask(dir / "m.pgm"), m);
}

#ifdef PINADAPT_HAVE_PNG
TEST(ImageIo, PngRoundTrip) {
  TempDir dir("img");
  const RgbImage img = noise_image(9, 11, 2);
  write_rgb(dir / "a.png", img);
  EXPECT_EQ(read_rgb(dir / "a.png"), img);
  LabelMask m(4, 6, 1);
  m.at(3, 5) = 33;
  write_mask(dir / "m.png", m);
  EXPECT_EQ(read_mask(dir / "m.png"), m);
}
#endif

TEST(ImageIo, RejectsWrongMagicAndTruncation) {
  TempDir dir("img");
  write_mask(dir / "m.pgm", LabelMask(2, 2));
  std::filesystem::copy_file(dir / "m.pgm", dir / "m.ppm");
  EXPECT_THROW(read_rgb(dir / "m.ppm"), ImageDecodeError);
  write_rgb(dir / "t.ppm", noise_image(4, 4, 3));
  std::filesystem::resize_file(dir / "t.ppm", std::filesystem::file_size(dir / "t.ppm") - 5);
  EXPECT_THROW(read_rgb(dir / "t.ppm"), ImageDecodeError);
}

TEST(Dataset, SortedOrderAndLabels) {
  TempDir dir("ds");
  write_pair(dir.path(), "train", "b", noise_image(4, 4, 1), LabelMask(4, 4, 1));
  write_pair(dir.path(), "train", "a", noise_image(4, 4, 2), LabelMask(4, 4, 2));
  const Dataset ds(small_spec(dir.path()));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.sample(0).name, "a.ppm");
  EXPECT_EQ(ds.sample(0).label.values[0], 2);
  std::size_t n = 0;
  for (const SegSample& s : ds) {
    EXPECT_EQ(s.image.height, 4u);
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

TEST(Dataset, RemapAppliedAndViolationsReported) {
  TempDir dir("ds");
  LabelMask m(2, 2, 7);
  m.at(0, 0) = 8;
  write_pair(dir.path(), "train", "x", noise_image(2, 2, 1), m);
  DatasetSpec spec = small_spec(dir.path(), 2);
  LabelRemap r;
  r.set(7, 0);
  r.set(8, 1);
  spec.remap = r;
  const auto s = Dataset(spec).sample(0);
  EXPECT_EQ(s.label.at(0, 0), 1);
  EXPECT_EQ(s.label.at(1, 1), 0);

  LabelRemap partial;
  partial.set(7, 0);
  spec.remap = partial;
  EXPECT_THROW(Dataset(spec).sample(0), DatasetError);

  LabelRemap colliding;
  colliding.set(7, 0);
  colliding.set(8, 0);
  spec.remap = colliding;
  EXPECT_THROW(Dataset{spec}, ValidationError);
}

TEST(Dataset, CityscapesRemapIsComplete) {
  const LabelRemap r = cityscapes_remap();
  EXPECT_NO_THROW(r.validate(19, 255));
  EXPECT_EQ(*r.map(7), 0);
  EXPECT_EQ(*r.map(33), 18);
  EXPECT_EQ(*r.map(0), 255);
  EXPECT_FALSE(r.map(40).has_value());
  EXPECT_EQ(LabelRemap::from_json(r.to_json()), r);
}

TEST(Dataset, MissingAndMisalignedLabelsNameTheFile) {
  TempDir dir("ds");
  write_pair(dir.path(), "train", "a", noise_image(4, 4, 1), LabelMask(3, 4, 0));
  std::filesystem::create_directories(dir / "images" / "train");
  write_rgb(dir / "images" / "train" / "b.ppm", noise_image(4, 4, 2));
  const Dataset ds(small_spec(dir.path()));
  try {
    ds.sample(0);
    FAIL() << "expected misaligned label error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.file().filename(), "a.pgm");
  }
  try {
    ds.sample(1);
    FAIL() << "expected missing label error";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.file().filename(), "b.pgm");
  }
}

TEST(Dataset, EmptyOrMissingDirectoryIsAnError) {
  TempDir dir("ds");
  EXPECT_THROW(Dataset{small_spec(dir.path())}, ValidationError);
  std::filesystem::create_directories(dir / "images" / "train");
  EXPECT_THROW(Dataset{small_spec(dir.path())}, ValidationError);
  DatasetSpec bad = small_spec(dir.path());
  bad.ignore_index = 1;
  EXPECT_THROW(Dataset{bad}, ValidationError);
}

TEST(Dataset, UnlabeledSplitSkipsLabels) {
  TempDir dir("ds");
  std::filesystem::create_directories(dir / "images" / "train");
  write_rgb(dir / "images" / "train" / "a.ppm", noise_image(4, 4, 1));
  DatasetSpec spec = small_spec(dir.path());
  spec.labeled = false;
  EXPECT_TRUE(Dataset(spec).sample(0).label.values.empty());
}

TEST(Dataset, SpecJsonResolvesRelativeRoot) {
  const auto spec = dataset_spec_from_json({{"root", "data/x"}, {"num_classes", 4}, {"split", "val"}}, "/base");
  EXPECT_EQ(spec.root, std::filesystem::path("/base/data/x"));
  EXPECT_EQ(spec.split, "val");
  const auto cs = dataset_spec_from_json({{"layout", "cityscapes"}, {"root", "/cs"}});
  EXPECT_EQ(cs.num_classes, 19u);
  EXPECT_EQ(cs.image_suffix, "_leftImg8bit.png");
}

TEST(ToyData, SameSeedSameBytes) {
  TempDir a("toy");
  TempDir b("toy");
  generate_toy_dataset(a.path(), 5, 3, 2, 2);
  generate_toy_dataset(b.path(), 5, 3, 2, 2);
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    EXPECT_EQ(read_bytes(entry.path()), read_bytes(b.path() / rel)) << rel;
  }
  EXPECT_EQ(render_toy_sample(1).image, render_toy_sample(1).image);
  EXPECT_NE(render_toy_sample(1).image, render_toy_sample(2).image);
}

TEST(ToyData, ShiftedValSharesLabelsWithVal) {
  TempDir dir("toy");
  const auto specs = generate_toy_dataset(dir.path(), 6, 2, 3, 2);
  const Dataset val(specs.source_val);
  const Dataset shifted(specs.target_val);
  ASSERT_EQ(val.size(), shifted.size());
  for (std::size_t i = 0; i < val.size(); ++i) {
    EXPECT_EQ(val.sample(i).label, shifted.sample(i).label);
    EXPECT_NE(val.sample(i).image, shifted.sample(i).image);
  }
  const auto s = val.sample(0);
  for (const auto v : s.label.values) EXPECT_LT(v, kToyClasses);
}
