#include "gap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gap/error.hpp"
#include "gap/model.hpp"
#include "gap/rng.hpp"

namespace gap {

namespace {

Tensor rows_subset(const Tensor &features, std::size_t begin, std::size_t count) {
  if (count == 0) return {};
  const std::size_t dim = features.cols();
  Tensor out({count, dim});
  std::copy_n(&features.data[begin * dim], count * dim, out.data.begin());
  return out;
}

std::uint32_t read_be_u32(std::istream &in, const char *what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char *>(bytes), 4))
    throw FormatError(std::string(what) + ": truncated file");
  return (static_cast<std::uint32_t>(bytes[0]) << 24) |
         (static_cast<std::uint32_t>(bytes[1]) << 16) |
         (static_cast<std::uint32_t>(bytes[2]) << 8) |
         static_cast<std::uint32_t>(bytes[3]);
}

} // namespace

Tensor Dataset::train_features() const { return rows_subset(features, 0, train_count); }

std::vector<int> Dataset::train_labels() const {
  return {labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(train_count)};
}

Tensor Dataset::val_features() const {
  return rows_subset(features, train_count, val_count());
}

std::vector<int> Dataset::val_labels() const {
  return {labels.begin() + static_cast<std::ptrdiff_t>(train_count), labels.end()};
}

Dataset load_idx(const std::string &images_path, const std::string &labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw FormatError("cannot open " + images_path);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw FormatError("cannot open " + labels_path);

  if (read_be_u32(images, "images") != 0x00000803u)
    throw FormatError("bad image magic (expected 0x00000803)");
  const std::uint32_t n_images = read_be_u32(images, "images");
  const std::uint32_t rows = read_be_u32(images, "images");
  const std::uint32_t cols = read_be_u32(images, "images");

  if (read_be_u32(labels, "labels") != 0x00000801u)
    throw FormatError("bad label magic (expected 0x00000801)");
  const std::uint32_t n_labels = read_be_u32(labels, "labels");
  if (n_images != n_labels)
    throw FormatError("image/label count mismatch");

  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  Dataset data;
  data.features = Tensor({static_cast<std::size_t>(n_images), dim});
  data.labels.resize(n_images);

  std::vector<unsigned char> buffer(dim);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    if (!images.read(reinterpret_cast<char *>(buffer.data()),
                     static_cast<std::streamsize>(dim)))
      throw FormatError("truncated image data");
    for (std::size_t j = 0; j < dim; ++j)
      data.features.data[i * dim + j] = static_cast<double>(buffer[j]) / 255.0;
  }
  std::vector<unsigned char> raw_labels(n_labels);
  if (!labels.read(reinterpret_cast<char *>(raw_labels.data()),
                   static_cast<std::streamsize>(n_labels)))
    throw FormatError("truncated label data");

  int max_label = 0;
  for (std::uint32_t i = 0; i < n_labels; ++i) {
    data.labels[i] = static_cast<int>(raw_labels[i]);
    max_label = std::max(max_label, data.labels[i]);
  }
  data.class_count = max_label + 1;
  data.train_count = data.size();
  return data;
}

void split_validation(Dataset &data, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw ConfigError("validation fraction must lie in [0, 1)");
  const std::size_t n = data.size();
  const std::size_t val = static_cast<std::size_t>(
      std::floor(fraction * static_cast<double>(n) + 0.5));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t dim = data.feature_dim();
  Tensor shuffled({n, dim});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&data.features.data[order[i] * dim], dim,
                &shuffled.data[i * dim]);
    labels[i] = data.labels[order[i]];
  }
  data.features = std::move(shuffled);
  data.labels = std::move(labels);
  data.train_count = n - val;
}

void attach_validation(Dataset &train, const Dataset &val) {
  if (train.feature_dim() != val.feature_dim())
    throw ShapeError("validation feature width mismatch");
  const std::size_t dim = train.feature_dim();
  const std::size_t n_train = train.size();
  train.train_count = n_train;
  Tensor merged({n_train + val.size(), dim});
  std::copy(train.features.data.begin(), train.features.data.end(),
            merged.data.begin());
  std::copy(val.features.data.begin(), val.features.data.end(),
            merged.data.begin() + static_cast<std::ptrdiff_t>(n_train * dim));
  train.features = std::move(merged);
  train.labels.insert(train.labels.end(), val.labels.begin(), val.labels.end());
  train.class_count = std::max(train.class_count, val.class_count);
}

Dataset make_synthetic(const SyntheticSpec &spec) {
  if (spec.teacher_layers.size() < 2)
    throw ConfigError("teacher needs input and output sizes");
  if (spec.samples == 0) throw ConfigError("sample count must be positive");
  if (spec.label_noise < 0.0 || spec.label_noise > 1.0)
    throw ConfigError("label noise must lie in [0, 1]");

  const std::size_t dim = spec.teacher_layers.front();
  const std::size_t classes = spec.teacher_layers.back();

  Rng teacher_rng(derive_seed(spec.seed, {kStreamTeacher}));
  Model teacher = Model::mlp(spec.teacher_layers, teacher_rng);

  Rng feature_rng(derive_seed(spec.seed, {kStreamFeatures}));
  Dataset data;
  data.features = Tensor({spec.samples, dim});
  for (double &v : data.features.data)
    v = 2.0 * feature_rng.next_double() - 1.0;
  data.class_count = static_cast<int>(classes);

  // Teacher logits for every sample.
  Tensor current = data.features;
  for (std::size_t l = 0; l < teacher.layer_count(); ++l) {
    Tensor next({current.rows(), teacher.layers()[l].fan_out()});
    const LinearLayer &layer = teacher.layers()[l];
    for (std::size_t b = 0; b < current.rows(); ++b) {
      for (std::size_t o = 0; o < layer.fan_out(); ++o) {
        double acc = layer.bias[o];
        const double *w = &layer.weight.data[o * layer.fan_in()];
        const double *x = &current.data[b * layer.fan_in()];
        for (std::size_t k = 0; k < layer.fan_in(); ++k) acc += w[k] * x[k];
        next.data[b * layer.fan_out() + o] = acc;
      }
    }
    if (l + 1 < teacher.layer_count())
      for (double &v : next.data) v = v > 0.0 ? v : 0.0;
    current = std::move(next);
  }

  // Calibrate output offsets so argmax class counts come out near-uniform;
  // labels stay consistent with the offset teacher.
  std::vector<double> offsets(classes, 0.0);
  const double target = static_cast<double>(spec.samples) / static_cast<double>(classes);
  for (int pass = 0; pass < 200; ++pass) {
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t b = 0; b < spec.samples; ++b) {
      const double *row = &current.data[b * classes];
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c)
        if (row[c] - offsets[c] > row[best] - offsets[best]) best = c;
      ++counts[best];
    }
    std::size_t max_dev = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double dev = std::abs(static_cast<double>(counts[c]) - target);
      max_dev = std::max(max_dev, static_cast<std::size_t>(dev));
    }
    if (static_cast<double>(max_dev) <= std::max(1.0, 0.02 * target)) break;
    for (std::size_t c = 0; c < classes; ++c)
      offsets[c] += 0.25 * std::log((static_cast<double>(counts[c]) + 1.0) /
                                    (target + 1.0));
  }

  data.labels.resize(spec.samples);
  Rng noise_rng(derive_seed(spec.seed, {kStreamLabelNoise}));
  for (std::size_t b = 0; b < spec.samples; ++b) {
    const double *row = &current.data[b * classes];
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c)
      if (row[c] - offsets[c] > row[best] - offsets[best]) best = c;
    int label = static_cast<int>(best);
    if (spec.label_noise > 0.0 && noise_rng.next_double() < spec.label_noise)
      label = static_cast<int>(noise_rng.next_below(classes));
    data.labels[b] = label;
  }

  data.train_count = spec.samples;
  if (spec.val_fraction > 0.0)
    split_validation(data, spec.val_fraction,
                     derive_seed(spec.seed, {kStreamValSplit}));
  return data;
}

std::vector<Batch> make_batches(const Dataset &data, std::size_t batch_size,
                                std::uint64_t shuffle_seed) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const std::size_t n = data.train_count;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order);

  const std::size_t dim = data.feature_dim();
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Batch batch;
    batch.x = Tensor({count, dim});
    batch.y.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = order[start + i];
      std::copy_n(&data.features.data[src * dim], dim, &batch.x.data[i * dim]);
      batch.y[i] = data.labels[src];
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::vector<Batch> probe_batches(const Dataset &data, std::size_t count,
                                 std::size_t batch_size, std::uint64_t seed) {
  const std::size_t n = std::min(count, data.train_count);
  std::vector<std::size_t> order(data.train_count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(n);
  std::sort(order.begin(), order.end());

  const std::size_t dim = data.feature_dim();
  std::vector<Batch> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t take = std::min(batch_size, n - start);
    Batch batch;
    batch.x = Tensor({take, dim});
    batch.y.resize(take);
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t src = order[start + i];
      std::copy_n(&data.features.data[src * dim], dim, &batch.x.data[i * dim]);
      batch.y[i] = data.labels[src];
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

} // namespace gap
