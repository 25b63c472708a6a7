#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "gap/analysis.hpp"
#include "gap/autodiff.hpp"
#include "gap/checkpoint.hpp"
#include "gap/config.hpp"
#include "gap/error.hpp"
#include "gap/record.hpp"
#include "gap/sparsity.hpp"

namespace py = pybind11;

namespace {

// Magnitude mask for a single weight matrix given row-major data.
std::vector<int> magnitude_mask(const std::vector<double> &weights,
                                std::size_t rows, double ratio, bool block) {
  if (rows == 0 || weights.size() % rows != 0)
    throw gap::ConfigError("weights length must be divisible by rows");
  gap::LinearLayer layer;
  layer.weight = gap::Tensor({rows, weights.size() / rows});
  layer.weight.data = weights;
  layer.bias.assign(rows, 0.0);
  gap::Model model = gap::Model::from_layers({std::move(layer)});

  gap::SparsityPolicy policy;
  policy.ratio = ratio;
  policy.granularity = block ? gap::Granularity::Block : gap::Granularity::Element;
  const std::vector<int> scope = {0};
  const gap::PruneResult result = gap::arg_prune_to(model, policy, scope);
  const auto &mask = result.fragment.layers.at(0);
  return {mask.begin(), mask.end()};
}

py::object mask_error(const std::vector<double> &weights,
                      const std::vector<std::uint8_t> &mask) {
  const auto err = gap::mask_relative_error(
      std::span<const double>(weights), std::span<const std::uint8_t>(mask));
  if (!err) return py::none();
  return py::float_(*err);
}

py::dict train_from_config(const std::string &config_path) {
  const gap::ExperimentConfig config = gap::load_experiment_config(config_path);
  gap::Model model = gap::build_model(config);
  const gap::Dataset data = gap::build_dataset(config);
  gap::RunOutput out = gap::run_experiment(config, model, data);

  std::filesystem::create_directories(config.output_dir);
  const std::string base = config.output_dir + "/" + config.run_id;
  gap::write_metrics_csv(out.record, base + ".metrics.csv");
  gap::save_checkpoint(model, out.masks, base + ".ckpt");

  const gap::EvalResult final_eval =
      data.val_count() > 0
          ? gap::evaluate(model, data.val_features(), data.val_labels())
          : gap::evaluate(model, data.train_features(), data.train_labels());

  py::dict summary;
  summary["run_id"] = config.run_id;
  summary["method"] = config.method;
  summary["epochs"] = out.record.epochs_consumed;
  summary["sparsity"] = gap::sparsity_of(out.masks);
  summary["val_accuracy"] = final_eval.accuracy;
  summary["val_loss"] = final_eval.loss;
  summary["best_step"] = out.record.best_step;
  return summary;
}

py::dict coverage_sim(int n, int per_step, int trials, std::uint64_t seed) {
  const gap::CoverageSim sim =
      gap::simulate_random_coverage(n, per_step, trials, seed);
  py::dict out;
  out["mean"] = sim.mean;
  out["stddev"] = sim.stddev;
  out["histogram"] = sim.histogram;
  return out;
}

py::dict inspect_checkpoint(const std::string &path) {
  const gap::Checkpoint ckpt = gap::load_checkpoint(path);
  py::dict out;
  out["layers"] = ckpt.model.layer_count();
  out["parameters"] = ckpt.model.parameter_count();
  out["sparsity"] = gap::sparsity_of(ckpt.masks);
  out["flops"] = gap::flops_estimate(ckpt.model, ckpt.masks);
  return out;
}

double lr_value(double base_lr, const std::string &schedule, int warmup_epochs,
                int epoch, int total_epochs) {
  gap::OptimizerConfig opt;
  opt.learning_rate = base_lr;
  opt.warmup_epochs = warmup_epochs;
  if (schedule == "constant")
    opt.schedule = gap::LrSchedule::Constant;
  else if (schedule == "cosine")
    opt.schedule = gap::LrSchedule::CosineWarmup;
  else
    throw gap::ConfigError("schedule must be constant or cosine");
  return gap::lr_at(opt, epoch, total_epochs);
}

} // namespace

PYBIND11_MODULE(gapsparse, m) {
  m.doc() = "Grow-and-prune sparse training engine";

  py::register_exception<gap::ConfigError>(m, "GapConfigError");

  m.def("train", &train_from_config, py::arg("config_path"),
        "Run the configured training method; returns a result summary.");
  m.def("magnitude_mask", &magnitude_mask, py::arg("weights"), py::arg("rows"),
        py::arg("ratio"), py::arg("block") = false,
        "Mask (1 = keep) pruning the lowest-magnitude entries of one matrix.");
  m.def("mask_relative_error", &mask_error, py::arg("weights"), py::arg("mask"),
        "Relative squared error introduced by a mask; None for zero weights.");
  m.def("coupon_expected_steps", &gap::coupon_expected_steps, py::arg("n"),
        py::arg("per_step") = 1,
        "Expected with-replacement steps to touch all n weights once.");
  m.def("scheduled_coverage_steps", &gap::scheduled_coverage_steps,
        py::arg("n"), py::arg("per_step") = 1,
        "Steps the scheduled (without-replacement) exploration needs.");
  m.def("simulate_random_coverage", &coverage_sim, py::arg("n"),
        py::arg("per_step"), py::arg("trials"), py::arg("seed"),
        "Monte-Carlo steps-to-full-coverage statistics.");
  m.def("full_coverage_probability", &gap::full_coverage_probability,
        py::arg("n"), py::arg("active"), py::arg("swap"), py::arg("updates"),
        "Exact chance random explore covers every weight of a layer.");
  m.def("lr_at", &lr_value, py::arg("base_lr"), py::arg("schedule"),
        py::arg("warmup_epochs"), py::arg("epoch"), py::arg("total_epochs"),
        "Learning rate at one epoch of a schedule.");
  m.def("inspect_checkpoint", &inspect_checkpoint, py::arg("path"),
        "Layer count, parameter count, sparsity, and FLOPs of a checkpoint.");
}
