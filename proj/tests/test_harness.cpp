#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>
#include <vector>

#include "gap/autodiff.hpp"
#include "gap/checkpoint.hpp"
#include "gap/config.hpp"
#include "gap/dataset.hpp"
#include "gap/error.hpp"
#include "gap/record.hpp"
#include "gap/rng.hpp"

using namespace gap;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gap_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int &counter() {
    static int n = 0;
    return n;
  }
  std::string file(const std::string &name) const { return (path / name).string(); }
};

void write_be32(std::ofstream &out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v >> 24),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char *>(bytes), 4);
}

void write_idx_pair(const std::string &images, const std::string &labels,
                    const std::vector<unsigned char> &pixels,
                    const std::vector<unsigned char> &label_bytes,
                    std::uint32_t rows = 2, std::uint32_t cols = 2,
                    std::uint32_t image_magic = 0x00000803u,
                    std::uint32_t label_magic = 0x00000801u) {
  std::ofstream img(images, std::ios::binary);
  write_be32(img, image_magic);
  write_be32(img, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  write_be32(img, rows);
  write_be32(img, cols);
  img.write(reinterpret_cast<const char *>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  img.close();

  std::ofstream lab(labels, std::ios::binary);
  write_be32(lab, label_magic);
  write_be32(lab, static_cast<std::uint32_t>(label_bytes.size()));
  lab.write(reinterpret_cast<const char *>(label_bytes.data()),
            static_cast<std::streamsize>(label_bytes.size()));
}

} // namespace

TEST_CASE("idx loader parses images and scales bytes") {
  TempDir dir;
  const std::string images = dir.file("imgs");
  const std::string labels = dir.file("labs");
  write_idx_pair(images, labels, {0, 128, 255, 64, 10, 20, 30, 40}, {3, 1});

  Dataset data = load_idx(images, labels);
  CHECK(data.size() == 2);
  CHECK(data.feature_dim() == 4);
  CHECK(data.labels == std::vector<int>{3, 1});
  CHECK(data.class_count == 4);
  CHECK(data.features.data[2] == 1.0); // byte 255 -> 1.0
  CHECK(data.features.data[0] == 0.0);
  CHECK(data.features.data[1] == doctest::Approx(128.0 / 255.0));
  CHECK(data.train_count == 2);
}

TEST_CASE("idx loader rejects malformed files") {
  TempDir dir;
  const std::string images = dir.file("imgs");
  const std::string labels = dir.file("labs");

  write_idx_pair(images, labels, {1, 2, 3, 4}, {0}, 2, 2, 0x00000805u);
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);

  write_idx_pair(images, labels, {1, 2, 3, 4}, {0}, 2, 2, 0x00000803u,
                 0x00000802u);
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);

  // Image/label count mismatch.
  write_idx_pair(images, labels, {1, 2, 3, 4, 5, 6, 7, 8}, {0, 1});
  CHECK_NOTHROW(load_idx(images, labels));
  write_idx_pair(images, labels, {1, 2, 3, 4, 5, 6, 7, 8}, {0, 1, 2});
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);

  // Truncated pixel data.
  {
    std::ofstream img(images, std::ios::binary);
    write_be32(img, 0x00000803u);
    write_be32(img, 2);
    write_be32(img, 2);
    write_be32(img, 2);
    const unsigned char few[3] = {1, 2, 3};
    img.write(reinterpret_cast<const char *>(few), 3);
  }
  write_idx_pair(dir.file("ok_imgs"), labels, {1, 2, 3, 4}, {0, 1});
  CHECK_THROWS_AS(load_idx(images, labels), FormatError);
}

TEST_CASE("synthetic teacher labels its own data perfectly at zero noise") {
  SyntheticSpec spec;
  spec.teacher_layers = {6, 12, 3};
  spec.samples = 500;
  spec.seed = 11;
  Dataset data = make_synthetic(spec);
  CHECK(data.size() == 500);
  CHECK(data.class_count == 3);
  CHECK(data.train_count == 500);

  // Deterministic under the seed.
  Dataset again = make_synthetic(spec);
  CHECK(again.features.data == data.features.data);
  CHECK(again.labels == data.labels);

  Dataset other_seed = make_synthetic({{6, 12, 3}, 500, 0.0, 12, 0.0});
  CHECK(other_seed.labels != data.labels);
}

TEST_CASE("synthetic class priors are near-uniform") {
  SyntheticSpec spec;
  spec.teacher_layers = {8, 16, 4};
  spec.samples = 10000;
  spec.seed = 3;
  Dataset data = make_synthetic(spec);
  std::vector<int> counts(4, 0);
  for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
  const double expected = 10000.0 / 4.0;
  const double sigma = std::sqrt(10000.0 * 0.25 * 0.75);
  for (int c : counts) CHECK(std::abs(c - expected) < 3.0 * sigma);
}

TEST_CASE("validation split is disjoint and seed-stable") {
  SyntheticSpec spec;
  spec.teacher_layers = {4, 8, 2};
  spec.samples = 100;
  spec.seed = 9;
  spec.val_fraction = 0.25;
  Dataset data = make_synthetic(spec);
  CHECK(data.train_count == 75);
  CHECK(data.val_count() == 25);
  CHECK(data.train_labels().size() == 75);
  CHECK(data.val_labels().size() == 25);
}

TEST_CASE("mask bitset packs LSB-first") {
  const std::vector<std::uint8_t> mask = {1, 0, 1, 0, 0, 1};
  const auto packed = pack_mask_bits(mask);
  REQUIRE(packed.size() == 1);
  CHECK(packed[0] == 0b00100101);
  CHECK(unpack_mask_bits(packed, 6) == mask);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  TempDir dir;
  Rng rng(21);
  Model model = Model::mlp({5, 7, 3}, rng);
  SparsityPolicy policy;
  policy.ratio = 0.6;
  MaskSet masks = init_sparse(model, policy, 4);

  const std::string path_a = dir.file("a.ckpt");
  const std::string path_b = dir.file("b.ckpt");
  save_checkpoint(model, masks, path_a);

  Checkpoint loaded = load_checkpoint(path_a);
  REQUIRE(loaded.model.layer_count() == model.layer_count());
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    CHECK(loaded.model.layers()[l].weight.data == model.layers()[l].weight.data);
    CHECK(loaded.model.layers()[l].bias == model.layers()[l].bias);
  }
  CHECK(loaded.masks.layers == masks.layers);

  // save -> load -> save produces identical bytes.
  save_checkpoint(loaded.model, loaded.masks, path_b);
  std::ifstream fa(path_a, std::ios::binary);
  std::ifstream fb(path_b, std::ios::binary);
  const std::vector<char> bytes_a((std::istreambuf_iterator<char>(fa)),
                                  std::istreambuf_iterator<char>());
  const std::vector<char> bytes_b((std::istreambuf_iterator<char>(fb)),
                                  std::istreambuf_iterator<char>());
  CHECK(bytes_a == bytes_b);

  // Dense masks are stored for every prunable layer, none omitted.
  MaskSet dense = MaskSet::dense_like(model);
  save_checkpoint(model, dense, path_b);
  Checkpoint dense_loaded = load_checkpoint(path_b);
  CHECK(dense_loaded.masks.layers.size() == model.layer_count());

  // Bad magic is rejected.
  {
    std::ofstream out(path_b, std::ios::binary);
    out << "NOTAMAGI" << "rest";
  }
  CHECK_THROWS_AS(load_checkpoint(path_b), FormatError);
}

TEST_CASE("checkpoint round-trips hold over random models") {
  TempDir dir;
  Rng rng(808);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t in = 2 + rng.next_below(10);
    const std::size_t mid = 2 + rng.next_below(10);
    const std::size_t out = 2 + rng.next_below(5);
    Model model = Model::mlp({in, mid, out}, rng);
    SparsityPolicy policy;
    policy.ratio = rng.next_double() * 0.9;
    MaskSet masks = init_sparse(model, policy, rng.next_u64());

    const std::string path = dir.file("t" + std::to_string(trial));
    save_checkpoint(model, masks, path);
    Checkpoint loaded = load_checkpoint(path);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
      CHECK(loaded.model.layers()[l].weight.data ==
            model.layers()[l].weight.data);
      CHECK(loaded.model.layers()[l].bias == model.layers()[l].bias);
    }
    CHECK(loaded.masks.layers == masks.layers);
  }
}

TEST_CASE("metrics csv has a stable header and formatting") {
  RunRecord record;
  record.run_id = "r1";
  record.method = "cgap";
  MetricsRow row;
  row.run_id = "r1";
  row.method = "cgap";
  row.step = 0;
  row.round = 0;
  row.epoch = 0;
  row.event = "epoch";
  row.lr = 0.1;
  row.train_loss = 0.6931471805599453;
  row.global_sparsity = 0.5;
  row.per_partition_sparsity = "0.5;0.5";
  row.coverage = 0.75;
  row.flops = 2010;
  record.add_row(row);

  CHECK(metrics_csv_header() ==
        "run_id,method,step,round,epoch,event,lr,train_loss,val_loss,"
        "val_accuracy,global_sparsity,per_partition_sparsity,coverage,"
        "delta_sq,flops,wall_seconds,partition");
  const std::string line = metrics_csv_line(row);
  const std::string expected = "r1,cgap,0,0,0,epoch," + format_double(0.1) +
                               ',' + format_double(0.6931471805599453) +
                               ",,," + format_double(0.5) + ",0.5;0.5," +
                               format_double(0.75) + ",,2010,,";
  CHECK(line == expected);
}

TEST_CASE("config parser enforces the schema") {
  const std::string good = R"(
[run]
method = cgap
seed = 7
[model]
layers = 4 8 2
[gap]
kappa = 2
steps = 4
epochs_per_step = 1
)";
  ExperimentConfig config = parse_experiment_config(good);
  CHECK(config.method == "cgap");
  CHECK(config.seed == 7);
  CHECK(config.model_layers == std::vector<std::size_t>{4, 8, 2});
  CHECK(config.gap.partitions == 2);
  CHECK(config.run_id == "cgap-s7");

  CHECK_THROWS_AS(parse_experiment_config("[nope]\nx = 1\n[model]\nlayers = 2 2"),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config("[run]\nbogus_key = 1\n[model]\nlayers = 2 2"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config("[run]\nmethod = warp\n[model]\nlayers = 2 2"),
      ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config("[run]\nseed = abc\n[model]\nlayers = 2 2"),
      ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("[model]\nlayers = 4"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("key_outside = 1"), ConfigError);
  CHECK_THROWS_AS(
      parse_experiment_config("[run]\nrun_id = a,b\n[model]\nlayers = 2 2"),
      ConfigError);
}

TEST_CASE("config-built model and dataset are deterministic") {
  const std::string text = R"(
[run]
method = static-random
seed = 123
[model]
layers = 6 10 2
[data]
samples = 200
val_fraction = 0.2
[sparsity]
ratio = 0.5
[baseline]
budget_epochs = 2
)";
  ExperimentConfig config = parse_experiment_config(text);
  Model a = build_model(config);
  Model b = build_model(config);
  for (std::size_t l = 0; l < a.layer_count(); ++l)
    CHECK(a.layers()[l].weight.data == b.layers()[l].weight.data);

  Dataset da = build_dataset(config);
  Dataset db = build_dataset(config);
  CHECK(da.features.data == db.features.data);
  CHECK(da.labels == db.labels);
  CHECK(da.train_count == 160);
}

TEST_CASE("batches cover the train split exactly once") {
  SyntheticSpec spec;
  spec.teacher_layers = {3, 4, 2};
  spec.samples = 53;
  spec.seed = 5;
  Dataset data = make_synthetic(spec);

  auto batches = make_batches(data, 10, 77);
  std::size_t total = 0;
  for (const auto &batch : batches) {
    CHECK(batch.x.rows() == batch.y.size());
    total += batch.y.size();
  }
  CHECK(total == 53);
  CHECK(batches.size() == 6);
  CHECK(batches.back().y.size() == 3);

  auto again = make_batches(data, 10, 77);
  CHECK(again[0].y == batches[0].y);
  auto different = make_batches(data, 10, 78);
  CHECK(different[0].y != batches[0].y);
}
