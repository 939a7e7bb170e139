// SPDX-License-Identifier: Apache-2.0
//
// Datasets: CIFAR-10 binary and IDX loaders, partial splits, synthetic
// Gaussian-blob images and cutout augmentation.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wdgnas/random.hpp"
#include "wdgnas/tensor.hpp"

namespace wdgnas {

/// Per-channel standardization applied after scaling pixels to [0,1].
struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  Shape shape;
  /// N x C x H x W, standardized.
  std::vector<float> images;
  std::vector<int> labels;
  NormStats norm;

  std::size_t size() const { return labels.size(); }
  const float* image(std::size_t i) const { return images.data() + i * shape.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Throws DataError if the invariants do not hold.
  void validate() const;
};

enum class DataFormat { CifarBinary, IdxPair };

/// Accepts "cifar-binary" and "idx-pair"; throws UsageError otherwise.
DataFormat parse_data_format(const std::string& text);

/// CIFAR: a batch file or a directory, in which case every data_batch_*.bin
/// is read in name order. IDX: the images file; the labels file is found by
/// replacing "images" with "labels" and "idx3" with "idx1" in its name.
/// Standardizes with `stats` when given, else with the data's own statistics.
Dataset load_dataset(const std::string& path, DataFormat format, const NormStats* stats = nullptr);
Dataset load_cifar_binary(const std::vector<std::string>& files, const NormStats* stats = nullptr);
Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path,
                      const NormStats* stats = nullptr);

NormStats compute_norm_stats(std::span<const float> raw, Shape shape);
/// In place; `raw` holds [0,1] pixels.
void standardize(std::span<float> raw, Shape shape, const NormStats& stats);

struct PartialSplit {
  Dataset partial_train;
  Dataset partial_valid;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> valid_indices;
  double train_frac = 0.08;
  double valid_frac = 0.02;
  std::uint64_t seed = 0;
};

/// Uniform sampling without replacement of round(frac * N) indices for each
/// part. Throws UsageError when the fractions are invalid or yield an empty part.
PartialSplit partial_split(const Dataset& dataset, double train_frac, double valid_frac, std::uint64_t seed);

struct SynthSpec {
  int num_classes = 10;
  int count = 1000;
  Shape shape{3, 8, 8};
  /// Standard deviation of per-pixel Gaussian noise.
  double noise = 1.0;
  /// Maximum random translation of the class pattern, in pixels.
  int jitter = 0;
  /// Selects the class mean patterns; train and test sets built from the
  /// same pattern seed share them.
  std::uint64_t pattern_seed = 0;

  void validate() const;
};

/// Mean pattern of every class before noise, (num_classes x C x H x W).
std::vector<double> synth_class_means(const SynthSpec& spec);

/// Balanced classes (label i % num_classes), noise drawn from `rng`.
Dataset synth_dataset(const SynthSpec& spec, Rng& rng, const NormStats* stats = nullptr);

struct TrainTest {
  Dataset train;
  Dataset test;
};

/// Train set of spec.count and test set of `test_count` images sharing class
/// patterns; the test set is standardized with the train statistics.
TrainTest synth_train_test(const SynthSpec& spec, int test_count, std::uint64_t seed);

/// Zeroes one size x size square (all channels) at a uniformly random
/// center, clipped to the image. Throws UsageError when size <= 0.
void cutout(std::span<double> image, Shape shape, int size, Rng& rng);

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices);

}  // namespace wdgnas
