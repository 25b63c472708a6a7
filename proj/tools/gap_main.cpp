#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gap/analysis.hpp"
#include "gap/autodiff.hpp"
#include "gap/checkpoint.hpp"
#include "gap/config.hpp"
#include "gap/error.hpp"
#include "gap/record.hpp"
#include "gap/rng.hpp"

namespace {

namespace fs = std::filesystem;

int cmd_train(const std::string &config_path) {
  const gap::ExperimentConfig config = gap::load_experiment_config(config_path);
  gap::Model model = gap::build_model(config);
  const gap::Dataset data = gap::build_dataset(config);

  gap::RunOutput out = gap::run_experiment(config, model, data);

  fs::create_directories(config.output_dir);
  const std::string base = config.output_dir + "/" + config.run_id;
  gap::write_metrics_csv(out.record, base + ".metrics.csv");
  gap::save_checkpoint(model, out.masks, base + ".ckpt");

  const gap::EvalResult final_eval =
      data.val_count() > 0
          ? gap::evaluate(model, data.val_features(), data.val_labels())
          : gap::evaluate(model, data.train_features(), data.train_labels());
  std::cout << "run " << config.run_id << ": epochs "
            << out.record.epochs_consumed << ", final sparsity "
            << gap::format_double(gap::sparsity_of(out.masks))
            << ", val accuracy " << gap::format_double(final_eval.accuracy)
            << "\n";
  std::cout << "wrote " << base << ".metrics.csv and " << base << ".ckpt\n";
  return 0;
}

int cmd_coverage(const std::string &config_path) {
  const gap::ExperimentConfig config = gap::load_experiment_config(config_path);
  const auto &cov = config.coverage;

  const gap::CoverageSim sim = gap::simulate_random_coverage(
      cov.n, cov.per_step, cov.trials, config.seed);
  const int scheduled = gap::scheduled_coverage_steps(cov.n, cov.per_step);

  fs::create_directories(config.output_dir);
  const std::string path = config.output_dir + "/coverage.csv";
  std::ofstream csv(path, std::ios::binary);
  csv << "steps,count\n";
  for (const auto &[steps, count] : sim.histogram)
    csv << steps << ',' << count << '\n';

  std::cout << "random exploration over " << cov.n << " weights ("
            << cov.trials << " trials): mean "
            << gap::format_double(sim.mean) << ", std "
            << gap::format_double(sim.stddev) << "\n";
  if (cov.per_step == 1)
    std::cout << "expected (closed form): "
              << gap::format_double(gap::coupon_expected_steps(cov.n)) << "\n";
  std::cout << "scheduled exploration covers in " << scheduled << " steps\n";
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_diagnose(const std::string &checkpoint_path,
                 const std::string &config_path) {
  const gap::ExperimentConfig config = gap::load_experiment_config(config_path);
  gap::Checkpoint ckpt = gap::load_checkpoint(checkpoint_path);
  const gap::Dataset data = gap::build_dataset(config);

  const std::vector<gap::Batch> probes = gap::probe_batches(
      data, config.diagnose.probe_samples, config.diagnose.batch_size,
      gap::derive_seed(config.seed, {gap::kStreamProbe}));

  const double grad_norm =
      gap::probe_gradient_norm(ckpt.model, ckpt.masks, probes);
  const double grad_var =
      gap::estimate_grad_variance(ckpt.model, ckpt.masks, probes);

  std::cout << "metric,scope,value\n";
  std::cout << "grad_norm_sq,global," << gap::format_double(grad_norm) << "\n";
  std::cout << "grad_variance,global," << gap::format_double(grad_var) << "\n";
  std::vector<int> scope;
  for (const auto &[id, mask] : ckpt.masks.layers) scope.push_back(id);
  const auto global_err = gap::mask_relative_error(ckpt.model, ckpt.masks, scope);
  std::cout << "delta_sq,global,"
            << (global_err ? gap::format_double(*global_err) : "no-signal")
            << "\n";
  for (int id : scope) {
    const gap::Tensor &w = ckpt.model.layers()[static_cast<std::size_t>(id)].weight;
    const auto err = gap::mask_relative_error(
        std::span<const double>(w.data),
        std::span<const std::uint8_t>(ckpt.masks.layers.at(id)));
    std::cout << "delta_sq,layers." << id << ','
              << (err ? gap::format_double(*err) : "no-signal") << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string &checkpoint_path) {
  const gap::Checkpoint ckpt = gap::load_checkpoint(checkpoint_path);
  std::cout << "layers: " << ckpt.model.layer_count() << "\n";
  for (std::size_t i = 0; i < ckpt.model.layer_count(); ++i) {
    const auto &layer = ckpt.model.layers()[i];
    std::cout << "  layers." << i << ": " << layer.fan_in() << " -> "
              << layer.fan_out();
    auto it = ckpt.masks.layers.find(static_cast<int>(i));
    if (it != ckpt.masks.layers.end()) {
      std::size_t zeros = 0;
      for (auto m : it->second) zeros += (m == 0);
      std::cout << ", sparsity "
                << gap::format_double(static_cast<double>(zeros) /
                                      static_cast<double>(it->second.size()));
    } else {
      std::cout << ", dense (no mask)";
    }
    std::cout << "\n";
  }
  std::cout << "global sparsity: "
            << gap::format_double(gap::sparsity_of(ckpt.masks)) << "\n";
  std::cout << "flops per sample: "
            << gap::flops_estimate(ckpt.model, ckpt.masks) << "\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"sparse training engine: scheduled grow-and-prune plus baselines"};
  app.require_subcommand(1);

  std::string config_path;
  std::string checkpoint_path;

  CLI::App *train = app.add_subcommand("train", "run the configured method");
  train->add_option("--config", config_path, "config file")->required();

  CLI::App *coverage =
      app.add_subcommand("coverage", "coverage and exploration analysis");
  coverage->add_option("--config", config_path, "config file")->required();

  CLI::App *diagnose =
      app.add_subcommand("diagnose", "convergence diagnostics for a checkpoint");
  diagnose->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  diagnose->add_option("--config", config_path, "config file")->required();

  CLI::App *inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect->add_option("--checkpoint", checkpoint_path, "checkpoint file")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(config_path);
    if (coverage->parsed()) return cmd_coverage(config_path);
    if (diagnose->parsed()) return cmd_diagnose(checkpoint_path, config_path);
    if (inspect->parsed()) return cmd_inspect(checkpoint_path);
  } catch (const gap::ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
