#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gap/tensor.hpp"

namespace gap {

// Labeled samples with a train/validation cut: rows [0, train_count) train,
// the rest validate.
struct Dataset {
  Tensor features; // [n, dim]
  std::vector<int> labels;
  std::size_t train_count = 0;
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t val_count() const { return labels.size() - train_count; }
  std::size_t feature_dim() const { return features.cols(); }

  Tensor train_features() const;
  std::vector<int> train_labels() const;
  Tensor val_features() const;
  std::vector<int> val_labels() const;
};

// IDX (big-endian) parser: image magic 0x00000803, label magic 0x00000801.
// Pixel bytes scale to [0, 1]. Everything lands in the train split; use
// split_validation or a second file pair for validation data.
// Throws FormatError on bad magic, truncation, or count mismatch.
Dataset load_idx(const std::string &images_path, const std::string &labels_path);

// Moves a seeded random fraction of samples into the validation split.
void split_validation(Dataset &data, double fraction, std::uint64_t seed);

// Appends another labeled set as the validation split.
void attach_validation(Dataset &train, const Dataset &val);

struct SyntheticSpec {
  std::vector<std::size_t> teacher_layers; // e.g. {20, 64, 64, 2}
  std::size_t samples = 1000;
  double label_noise = 0.0; // probability a label is resampled uniformly
  std::uint64_t seed = 0;
  double val_fraction = 0.0;
};

// Labels come from a seeded random teacher network's argmax. The teacher's
// output biases are calibrated on the generated sample so class counts are
// close to balanced; labels remain the argmax of the calibrated teacher, so
// at zero noise the teacher classifies its own data perfectly.
Dataset make_synthetic(const SyntheticSpec &spec);

// Deterministic batching: a seeded shuffle of the train indices, cut into
// batch_size pieces (last one may be short).
struct Batch {
  Tensor x;
  std::vector<int> y;
};

std::vector<Batch> make_batches(const Dataset &data, std::size_t batch_size,
                                std::uint64_t shuffle_seed);

// First `count` train samples in stored order, as fixed probe batches.
std::vector<Batch> probe_batches(const Dataset &data, std::size_t count,
                                 std::size_t batch_size, std::uint64_t seed);

} // namespace gap
