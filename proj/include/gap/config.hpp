#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gap/baselines.hpp"
#include "gap/dataset.hpp"
#include "gap/gap_cyclic.hpp"

namespace gap {

// Typed view of a config file: flat key-value pairs under named sections.
// Unknown sections or keys are rejected at parse time.
struct DataSpec {
  std::string kind = "synthetic"; // synthetic | idx
  std::size_t samples = 1000;
  std::vector<std::size_t> teacher_layers; // defaults to the model layers
  double noise = 0.0;
  double val_fraction = 0.2;
  std::string train_images;
  std::string train_labels;
  std::string val_images;
  std::string val_labels;
};

struct CoverageSpec {
  int n = 10;
  int per_step = 1;
  int trials = 2000;
};

struct DiagnoseSpec {
  std::size_t probe_samples = 512;
  std::size_t batch_size = 32;
};

struct ExperimentConfig {
  std::string method = "cgap";
  std::uint64_t seed = 0;
  std::string output_dir = ".";
  std::string run_id; // defaults to <method>-s<seed>

  std::vector<std::size_t> model_layers;
  DataSpec data;
  OptimizerConfig optimizer;
  SparsityPolicy policy;
  GapConfig gap;           // schedule knobs for cgap/pgap
  BaselineConfig baseline; // knobs for the comparator methods
  CoverageSpec coverage;
  DiagnoseSpec diagnose;
};

// Parses and schema-validates. Throws ConfigError with a line reference on
// any unknown key, type error, or missing requirement.
ExperimentConfig load_experiment_config(const std::string &path);
ExperimentConfig parse_experiment_config(const std::string &text);

Model build_model(const ExperimentConfig &config);
Dataset build_dataset(const ExperimentConfig &config);

// Dispatches on config.method. The model is trained in place.
RunOutput run_experiment(const ExperimentConfig &config, Model &model,
                         const Dataset &data);

} // namespace gap
