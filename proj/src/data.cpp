// SPDX-License-Identifier: Apache-2.0

#include "wdgnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include "wdgnas/errors.hpp"

namespace wdgnas {

namespace fs = std::filesystem;

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.name = name;
  out.num_classes = num_classes;
  out.shape = shape;
  out.norm = norm;
  out.images.reserve(indices.size() * shape.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw UsageError("subset index out of range");
    out.images.insert(out.images.end(), image(i), image(i) + shape.size());
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (labels.empty()) throw DataError(name + ": dataset is empty");
  if (num_classes < 1) throw DataError(name + ": num_classes must be ≥ 1");
  if (images.size() != labels.size() * shape.size()) throw DataError(name + ": image and label counts differ");
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DataError(name + ": label out of range: " + std::to_string(y));
  }
  if (norm.mean.size() != static_cast<std::size_t>(shape.channels) ||
      norm.stddev.size() != static_cast<std::size_t>(shape.channels)) {
    throw DataError(name + ": normalization statistics missing");
  }
}

DataFormat parse_data_format(const std::string& text) {
  if (text == "cifar-binary") return DataFormat::CifarBinary;
  if (text == "idx-pair") return DataFormat::IdxPair;
  throw UsageError("unknown dataset format: " + text);
}

NormStats compute_norm_stats(std::span<const float> raw, Shape shape) {
  const std::size_t plane = shape.plane();
  const std::size_t n = raw.size() / shape.size();
  NormStats stats;
  for (int c = 0; c < shape.channels; ++c) {
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const float* px = raw.data() + i * shape.size() + c * plane;
      for (std::size_t j = 0; j < plane; ++j) sum += px[j];
    }
    const double count = static_cast<double>(n * plane);
    const double mean = sum / count;
    for (std::size_t i = 0; i < n; ++i) {
      const float* px = raw.data() + i * shape.size() + c * plane;
      for (std::size_t j = 0; j < plane; ++j) sq += (px[j] - mean) * (px[j] - mean);
    }
    const double sd = std::sqrt(sq / count);
    stats.mean.push_back(mean);
    stats.stddev.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return stats;
}

void standardize(std::span<float> raw, Shape shape, const NormStats& stats) {
  if (stats.mean.size() != static_cast<std::size_t>(shape.channels) ||
      stats.stddev.size() != static_cast<std::size_t>(shape.channels)) {
    throw UsageError("normalization statistics do not match channel count");
  }
  const std::size_t plane = shape.plane();
  const std::size_t n = raw.size() / shape.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < shape.channels; ++c) {
      float* px = raw.data() + i * shape.size() + c * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        px[j] = static_cast<float>((px[j] - stats.mean[c]) / stats.stddev[c]);
      }
    }
  }
}

namespace {

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void finish(Dataset& d, const NormStats* stats) {
  d.norm = stats ? *stats : compute_norm_stats(d.images, d.shape);
  standardize(d.images, d.shape, d.norm);
  d.validate();
}

std::uint32_t big_endian(const std::vector<unsigned char>& bytes, std::size_t offset) {
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

}  // namespace

Dataset load_cifar_binary(const std::vector<std::string>& files, const NormStats* stats) {
  constexpr std::size_t kPixels = 3 * 32 * 32;
  constexpr std::size_t kRecord = kPixels + 1;
  if (files.empty()) throw DataError("no CIFAR batch files");
  Dataset d;
  d.name = "cifar10";
  d.num_classes = 10;
  d.shape = {3, 32, 32};
  for (const auto& file : files) {
    const auto bytes = read_bytes(file);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw DataError(file + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                      std::to_string(kRecord) + "-byte records");
    }
    for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
      const int label = bytes[off];
      if (label >= d.num_classes) throw DataError(file + ": label out of range: " + std::to_string(label));
      d.labels.push_back(label);
      for (std::size_t j = 0; j < kPixels; ++j) d.images.push_back(bytes[off + 1 + j] / 255.0f);
    }
  }
  finish(d, stats);
  return d;
}

Dataset load_idx_pair(const std::string& images_path, const std::string& labels_path, const NormStats* stats) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);
  if (img.size() < 16 || big_endian(img, 0) != 0x00000803) throw DataError(images_path + ": not an IDX3 ubyte file");
  if (lab.size() < 8 || big_endian(lab, 0) != 0x00000801) throw DataError(labels_path + ": not an IDX1 ubyte file");
  const std::size_t n = big_endian(img, 4);
  const int h = static_cast<int>(big_endian(img, 8));
  const int w = static_cast<int>(big_endian(img, 12));
  if (n == 0 || h < 1 || w < 1) throw DataError(images_path + ": empty image header");
  const std::size_t pixels = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (img.size() != 16 + n * pixels) throw DataError(images_path + ": truncated or oversized image data");
  if (big_endian(lab, 4) != n) throw DataError(labels_path + ": label count differs from image count");
  if (lab.size() != 8 + n) throw DataError(labels_path + ": truncated or oversized label data");

  Dataset d;
  d.name = fs::path(images_path).stem().string();
  d.shape = {1, h, w};
  d.images.reserve(n * pixels);
  for (std::size_t j = 0; j < n * pixels; ++j) d.images.push_back(img[16 + j] / 255.0f);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(lab[8 + i]);
    max_label = std::max(max_label, d.labels.back());
  }
  d.num_classes = max_label + 1;
  finish(d, stats);
  return d;
}

Dataset load_dataset(const std::string& path, DataFormat format, const NormStats* stats) {
  if (!fs::exists(path)) throw DataError("dataset path does not exist: " + path);
  if (format == DataFormat::CifarBinary) {
    std::vector<std::string> files;
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("data_batch_") && name.ends_with(".bin")) files.push_back(entry.path().string());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw DataError(path + ": no data_batch_*.bin files");
    } else {
      files.push_back(path);
    }
    return load_cifar_binary(files, stats);
  }
  const fs::path images(path);
  std::string name = images.filename().string();
  auto swap = [&](const std::string& from, const std::string& to) {
    if (auto pos = name.find(from); pos != std::string::npos) name.replace(pos, from.size(), to);
  };
  swap("images", "labels");
  swap("idx3", "idx1");
  const fs::path labels = images.parent_path() / name;
  if (labels == images) throw DataError(path + ": cannot derive the labels file name");
  return load_idx_pair(images.string(), labels.string(), stats);
}

PartialSplit partial_split(const Dataset& dataset, double train_frac, double valid_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0) || !(valid_frac > 0.0) || train_frac + valid_frac > 1.0 + 1e-12) {
    throw UsageError("split fractions must be positive and sum to at most 1");
  }
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  const auto n_valid = static_cast<std::size_t>(std::llround(valid_frac * static_cast<double>(n)));
  if (n_train == 0 || n_valid == 0) throw UsageError("split fractions yield an empty part for N=" + std::to_string(n));
  if (n_train + n_valid > n) throw UsageError("split parts exceed the dataset");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = derive_rng(seed, {0x5911});
  std::shuffle(perm.begin(), perm.end(), rng);

  PartialSplit split;
  split.train_frac = train_frac;
  split.valid_frac = valid_frac;
  split.seed = seed;
  split.train_indices.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.valid_indices.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                             perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
  split.partial_train = dataset.subset(split.train_indices);
  split.partial_valid = dataset.subset(split.valid_indices);
  split.partial_train.name = dataset.name + "/partial-train";
  split.partial_valid.name = dataset.name + "/partial-valid";
  return split;
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw UsageError("synthetic dataset needs at least 2 classes");
  if (count < num_classes) throw UsageError("synthetic dataset needs at least one image per class");
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1) throw UsageError("synthetic shape must be positive");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw UsageError("synthetic noise must be finite and ≥ 0");
  if (jitter < 0) throw UsageError("synthetic jitter must be ≥ 0");
}

std::vector<double> synth_class_means(const SynthSpec& spec) {
  spec.validate();
  const int h = spec.shape.height, w = spec.shape.width;
  std::vector<double> means(static_cast<std::size_t>(spec.num_classes) * spec.shape.size(), 0.0);
  constexpr int kBlobs = 2;
  for (int c = 0; c < spec.num_classes; ++c) {
    Rng rng = derive_rng(spec.pattern_seed, {0xB10B, static_cast<std::uint64_t>(c)});
    std::uniform_real_distribution<double> cy(0.0, h - 1.0), cx(0.0, w - 1.0);
    std::uniform_real_distribution<double> radius(0.75, std::max(1.0, std::min(h, w) / 3.0));
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    double* mean = means.data() + static_cast<std::size_t>(c) * spec.shape.size();
    for (int b = 0; b < kBlobs; ++b) {
      const double y0 = cy(rng), x0 = cx(rng), r = radius(rng);
      for (int ch = 0; ch < spec.shape.channels; ++ch) {
        const double a = amp(rng);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double d2 = (y - y0) * (y - y0) + (x - x0) * (x - x0);
            mean[(ch * h + y) * w + x] += a * std::exp(-d2 / (2.0 * r * r));
          }
        }
      }
    }
  }
  return means;
}

Dataset synth_dataset(const SynthSpec& spec, Rng& rng, const NormStats* stats) {
  const auto means = synth_class_means(spec);
  const int h = spec.shape.height, w = spec.shape.width;
  Dataset d;
  d.name = "synth";
  d.num_classes = spec.num_classes;
  d.shape = spec.shape;
  d.images.resize(static_cast<std::size_t>(spec.count) * spec.shape.size());
  d.labels.resize(spec.count);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-spec.jitter, spec.jitter);
  for (int i = 0; i < spec.count; ++i) {
    const int label = i % spec.num_classes;
    d.labels[i] = label;
    const double* mean = means.data() + static_cast<std::size_t>(label) * spec.shape.size();
    const int dy = spec.jitter ? shift(rng) : 0;
    const int dx = spec.jitter ? shift(rng) : 0;
    float* px = d.images.data() + static_cast<std::size_t>(i) * spec.shape.size();
    for (int ch = 0; ch < spec.shape.channels; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const int sy = y - dy, sx = x - dx;
          const double base = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? mean[(ch * h + sy) * w + sx] : 0.0;
          const double eps = spec.noise > 0.0 ? spec.noise * noise(rng) : 0.0;
          // Map to [0,1]-like pixel space before standardization.
          px[(ch * h + y) * w + x] = static_cast<float>(0.5 + 0.25 * (base + eps));
        }
      }
    }
  }
  finish(d, stats);
  return d;
}

TrainTest synth_train_test(const SynthSpec& spec, int test_count, std::uint64_t seed) {
  if (test_count < 1) throw UsageError("test set must have at least one image");
  Rng train_rng = derive_rng(seed, {0x7A1});
  Rng test_rng = derive_rng(seed, {0x7E57});
  TrainTest out;
  out.train = synth_dataset(spec, train_rng);
  SynthSpec test_spec = spec;
  test_spec.count = test_count;
  out.test = synth_dataset(test_spec, test_rng, &out.train.norm);
  out.test.name = "synth-test";
  return out;
}

void cutout(std::span<double> image, Shape shape, int size, Rng& rng) {
  if (size <= 0) throw UsageError("cutout size must be positive");
  if (image.size() != shape.size()) throw UsageError("cutout image does not match shape");
  std::uniform_int_distribution<int> cy(0, shape.height - 1), cx(0, shape.width - 1);
  const int y0 = cy(rng) - size / 2, x0 = cx(rng) - size / 2;
  const int y1 = std::min(shape.height, y0 + size), x1 = std::min(shape.width, x0 + size);
  for (int ch = 0; ch < shape.channels; ++ch) {
    for (int y = std::max(0, y0); y < y1; ++y) {
      for (int x = std::max(0, x0); x < x1; ++x) image[(ch * shape.height + y) * shape.width + x] = 0.0;
    }
  }
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
  Batch batch;
  batch.inputs = Tensor(static_cast<int>(indices.size()), dataset.shape);
  batch.labels.reserve(indices.size());
  const std::size_t dim = dataset.shape.size();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    if (i >= dataset.size()) throw UsageError("batch index out of range");
    std::copy_n(dataset.image(i), dim, batch.inputs.data.begin() + static_cast<std::ptrdiff_t>(k * dim));
    batch.labels.push_back(dataset.labels[i]);
  }
  return batch;
}

}  // namespace wdgnas
