// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/data.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "wdgnas/errors.hpp"

namespace wdgnas {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& file) const { return path_ / file; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<unsigned char>(v >> shift));
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t h, std::uint32_t w) {
  std::vector<unsigned char> out;
  put_be32(out, 0x00000803);
  put_be32(out, n);
  put_be32(out, h);
  put_be32(out, w);
  for (std::uint32_t i = 0; i < n * h * w; ++i) out.push_back(static_cast<unsigned char>((i * 37) % 256));
  return out;
}

std::vector<unsigned char> idx_labels(std::uint32_t n, int classes) {
  std::vector<unsigned char> out;
  put_be32(out, 0x00000801);
  put_be32(out, n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(static_cast<unsigned char>(i % classes));
  return out;
}

std::vector<unsigned char> cifar_records(int n, int label_offset = 0) {
  std::vector<unsigned char> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(static_cast<unsigned char>((i + label_offset) % 10));
    for (int j = 0; j < 3072; ++j) out.push_back(static_cast<unsigned char>((i * 7 + j) % 256));
  }
  return out;
}

// Accuracy of assigning each image to the closest class mean.
double nearest_mean_accuracy(const Dataset& ds, const SynthSpec& spec) {
  auto means = synth_class_means(spec);
  // Class means in standardized pixel space.
  std::vector<float> raw(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) raw[i] = static_cast<float>(0.5 + 0.25 * means[i]);
  standardize(raw, spec.shape, ds.norm);
  const std::size_t dim = spec.shape.size();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    int best = 0;
    double best_d = INFINITY;
    for (int c = 0; c < spec.num_classes; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double diff = ds.image(i)[j] - raw[c * dim + j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += best == ds.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

TEST(LoadDataset, IdxPairIsHeaderDriven) {
  TempDir dir("wdgnas_idx_test");
  write_file(dir / "train-images-idx3-ubyte", idx_images(100, 8, 8));
  write_file(dir / "train-labels-idx1-ubyte", idx_labels(100, 10));
  const Dataset ds = load_dataset((dir / "train-images-idx3-ubyte").string(), DataFormat::IdxPair);
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.shape, (Shape{1, 8, 8}));
  EXPECT_EQ(ds.num_classes, 10);
  ASSERT_EQ(ds.norm.mean.size(), 1u);

  double sum = 0.0, sq = 0.0;
  for (float v : ds.images) {
    sum += v;
    sq += v * v;
  }
  const double n = static_cast<double>(ds.images.size());
  EXPECT_NEAR(sum / n, 0.0, 1e-5);
  EXPECT_NEAR(sq / n, 1.0, 1e-4);

  const Dataset again = load_dataset((dir / "train-images-idx3-ubyte").string(), DataFormat::IdxPair);
  EXPECT_EQ(again.images, ds.images);
  EXPECT_NEAR(again.norm.mean[0], ds.norm.mean[0], 1e-12);
}

TEST(LoadDataset, CorruptedIdxHeaders) {
  TempDir dir("wdgnas_idx_bad");
  auto images = idx_images(10, 4, 4);
  images[3] = 0x04;
  write_file(dir / "a-images-idx3-ubyte", images);
  write_file(dir / "a-labels-idx1-ubyte", idx_labels(10, 2));
  EXPECT_THROW(load_dataset((dir / "a-images-idx3-ubyte").string(), DataFormat::IdxPair), DataError);

  auto truncated = idx_images(10, 4, 4);
  truncated.resize(truncated.size() - 5);
  write_file(dir / "b-images-idx3-ubyte", truncated);
  write_file(dir / "b-labels-idx1-ubyte", idx_labels(10, 2));
  EXPECT_THROW(load_dataset((dir / "b-images-idx3-ubyte").string(), DataFormat::IdxPair), DataError);

  write_file(dir / "c-images-idx3-ubyte", idx_images(10, 4, 4));
  write_file(dir / "c-labels-idx1-ubyte", idx_labels(9, 2));
  EXPECT_THROW(load_dataset((dir / "c-images-idx3-ubyte").string(), DataFormat::IdxPair), DataError);

  EXPECT_THROW(load_dataset((dir / "missing").string(), DataFormat::IdxPair), DataError);
}

TEST(LoadDataset, CifarBinaryRecords) {
  TempDir dir("wdgnas_cifar_test");
  write_file(dir / "data_batch_1.bin", cifar_records(20));
  write_file(dir / "data_batch_2.bin", cifar_records(30, 3));
  write_file(dir / "test_batch.bin", cifar_records(5));
  const Dataset ds = load_dataset(dir.path().string(), DataFormat::CifarBinary);
  EXPECT_EQ(ds.size(), 50u);
  EXPECT_EQ(ds.shape, (Shape{3, 32, 32}));
  EXPECT_EQ(ds.num_classes, 10);
  EXPECT_EQ(ds.labels[20], 3);
  EXPECT_EQ(ds.norm.mean.size(), 3u);

  const Dataset test = load_dataset((dir / "test_batch.bin").string(), DataFormat::CifarBinary, &ds.norm);
  EXPECT_EQ(test.norm.mean, ds.norm.mean);

  auto bad = cifar_records(2);
  bad[3073] = 10;
  write_file(dir / "bad.bin", bad);
  EXPECT_THROW(load_dataset((dir / "bad.bin").string(), DataFormat::CifarBinary), DataError);
  auto short_file = cifar_records(2);
  short_file.pop_back();
  write_file(dir / "short.bin", short_file);
  EXPECT_THROW(load_dataset((dir / "short.bin").string(), DataFormat::CifarBinary), DataError);

  EXPECT_THROW(parse_data_format("png"), UsageError);
  EXPECT_EQ(parse_data_format("cifar-binary"), DataFormat::CifarBinary);
}

Dataset tiny(std::size_t n) {
  Dataset d;
  d.name = "tiny";
  d.num_classes = 2;
  d.shape = {1, 1, 1};
  for (std::size_t i = 0; i < n; ++i) {
    d.images.push_back(static_cast<float>(i));
    d.labels.push_back(static_cast<int>(i % 2));
  }
  d.norm = {{0.0}, {1.0}};
  return d;
}

TEST(PartialSplit, CifarScaleSizes) {
  const Dataset big = tiny(50000);
  const auto split = partial_split(big, 0.08, 0.02, 1);
  EXPECT_EQ(split.partial_train.size(), 4000u);
  EXPECT_EQ(split.partial_valid.size(), 1000u);
}

TEST(PartialSplit, SmallDisjointAndDeterministic) {
  const Dataset d = tiny(100);
  const auto a = partial_split(d, 0.08, 0.02, 7);
  EXPECT_EQ(a.train_indices.size(), 8u);
  EXPECT_EQ(a.valid_indices.size(), 2u);
  const auto b = partial_split(d, 0.08, 0.02, 7);
  EXPECT_EQ(a.train_indices, b.train_indices);
  EXPECT_EQ(a.valid_indices, b.valid_indices);
  // Images are their own index, so the subset contents follow the indices.
  EXPECT_EQ(a.partial_train.images[0], static_cast<float>(a.train_indices[0]));

  EXPECT_THROW(partial_split(tiny(10), 0.08, 0.02, 1), UsageError);
  EXPECT_THROW(partial_split(d, 0.8, 0.3, 1), UsageError);
  EXPECT_THROW(partial_split(d, 0.0, 0.3, 1), UsageError);
}

TEST(PartialSplit, DisjointForEverySeed) {
  const Dataset d = tiny(500);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto s = partial_split(d, 0.3, 0.2, seed);
    std::set<std::size_t> train(s.train_indices.begin(), s.train_indices.end());
    EXPECT_EQ(train.size(), s.train_indices.size());
    for (std::size_t i : s.valid_indices) EXPECT_FALSE(train.contains(i));
  }
}

TEST(SynthDataset, NoiselessIsSeparable) {
  SynthSpec spec;
  spec.noise = 0.0;
  spec.count = 200;
  Rng rng(1);
  const Dataset ds = synth_dataset(spec, rng);
  EXPECT_EQ(nearest_mean_accuracy(ds, spec), 1.0);
}

TEST(SynthDataset, BalancedClasses) {
  SynthSpec spec;
  spec.count = 1000;
  Rng rng(2);
  const Dataset ds = synth_dataset(spec, rng);
  for (int c = 0; c < 10; ++c) EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), c), 100);
}

TEST(SynthDataset, HighNoiseIsChanceLevel) {
  SynthSpec spec;
  spec.count = 2000;
  spec.noise = 1000.0;
  Rng rng(3);
  const Dataset ds = synth_dataset(spec, rng);
  EXPECT_NEAR(nearest_mean_accuracy(ds, spec), 0.1, 0.05);
}

TEST(SynthDataset, DistinctMeansAndDeterminism) {
  SynthSpec spec;
  const auto means = synth_class_means(spec);
  const std::size_t dim = spec.shape.size();
  double min_gap = INFINITY;
  for (int a = 0; a < spec.num_classes; ++a) {
    for (int b = a + 1; b < spec.num_classes; ++b) {
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) d += std::pow(means[a * dim + j] - means[b * dim + j], 2);
      min_gap = std::min(min_gap, std::sqrt(d));
    }
  }
  EXPECT_GT(min_gap, 0.0);

  Rng a(4), b(4);
  EXPECT_EQ(synth_dataset(spec, a).images, synth_dataset(spec, b).images);

  const auto tt = synth_train_test(spec, 50, 9);
  EXPECT_EQ(tt.test.size(), 50u);
  EXPECT_EQ(tt.test.norm.mean, tt.train.norm.mean);

  SynthSpec bad = spec;
  bad.num_classes = 1;
  Rng c(5);
  EXPECT_THROW(synth_dataset(bad, c), UsageError);
}

TEST(Cutout, ClippedSquare) {
  const Shape shape{2, 6, 5};
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> image(shape.size(), 1.0);
    const int size = 1 + trial % 4;
    cutout(image, shape, size, rng);
    const auto zeros = std::count(image.begin(), image.end(), 0.0);
    EXPECT_EQ(zeros % 2, 0);
    EXPECT_LE(zeros / 2, size * size);
    EXPECT_GE(zeros / 2, 1);
    // Channels share the hole.
    EXPECT_TRUE(std::equal(image.begin(), image.begin() + 30, image.begin() + 30));
  }
  std::vector<double> image(shape.size(), 1.0);
  cutout(image, shape, 12, rng);
  EXPECT_EQ(std::count(image.begin(), image.end(), 0.0), static_cast<long>(shape.size()));
  EXPECT_THROW(cutout(image, shape, 0, rng), UsageError);
}

TEST(MakeBatch, CopiesImagesAndLabels) {
  const Dataset d = tiny(10);
  const std::vector<std::size_t> idx{3, 7};
  const Batch b = make_batch(d, idx);
  EXPECT_EQ(b.inputs.batch, 2);
  EXPECT_EQ(b.inputs.data[1], 7.0);
  EXPECT_EQ(b.labels, (std::vector<int>{1, 1}));
}

}  // namespace
}  // namespace wdgnas
