#include "gap/gap_cyclic.hpp"

#include <optional>

#include "gap/error.hpp"
#include "gap/train.hpp"

namespace gap {

void validate_gap_config(const GapConfig &config, const Model &model) {
  validate_policy(config.policy);
  validate_optimizer(config.optimizer);
  const auto prunable = prunable_layers(model, config.policy);
  if (config.partitions < 1 ||
      config.partitions > static_cast<int>(prunable.size()))
    throw ConfigError("partition count outside [1, prunable layer count]");
  if (config.steps < 1) throw ConfigError("steps must be >= 1");
  if (config.epochs_per_step < 1) throw ConfigError("epochs per step must be >= 1");
  if (config.finetune_epochs < 0)
    throw ConfigError("fine-tune epochs must be >= 0");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
}

namespace {

std::string joined_partition_sparsity(const MaskSet &masks,
                                      const PartitionScheme &scheme) {
  std::string out;
  for (std::size_t g = 0; g < scheme.groups.size(); ++g) {
    if (g > 0) out += ';';
    out += format_double(sparsity_of(masks, scheme.groups[g]));
  }
  return out;
}

} // namespace

RunOutput run_cgap(const GapConfig &config, Model &model, const Dataset &data,
                   const std::string &run_id) {
  validate_policy(config.policy);
  validate_optimizer(config.optimizer);
  if (config.partitions < 1) throw ConfigError("partition count must be >= 1");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");

  const int kappa = config.partitions;
  const int total_steps = config.steps;

  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "cgap";

  MaskSet &masks = out.masks;
  masks = init_sparse(model, config.policy,
                      derive_seed(config.seed, {kStreamInitMask}));
  CoverageTracker tracker(masks);
  SgdOptimizer optimizer(config.optimizer, model);

  const std::vector<Batch> probes =
      probe_batches(data, config.probe_samples, config.batch_size,
                    derive_seed(config.seed, {kStreamProbe}));

  PartitionScheme scheme =
      config.strategy == PartitionStrategy::Contiguous
          ? make_contiguous_partitions(model, config.policy, kappa)
          : make_random_partition(model, config.policy, kappa,
                                  derive_seed(config.seed, {kStreamPartition, 0}));

  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = sparsity_of(masks);
    row.per_partition_sparsity = joined_partition_sparsity(masks, scheme);
    row.coverage = tracker.fraction();
    row.flops = flops_estimate(model, masks);
  };

  auto event_row = [&](int step, int round, const char *kind, int partition,
                       std::optional<double> delta_sq) {
    MetricsRow row;
    row.run_id = run_id;
    row.method = out.record.method;
    row.step = step;
    row.round = round;
    row.epoch = out.record.epochs_consumed;
    row.event = kind;
    row.partition = partition;
    row.delta_sq = delta_sq;
    annotate(row);
    out.record.add_row(std::move(row));
  };

  std::optional<std::vector<int>> previously_grown;
  double round_error_sum = 0.0;
  int round_error_count = 0;
  auto flush_round_errors = [&]() {
    if (round_error_count > 0 || !out.convergence.grad_norms.empty()) {
      out.convergence.mask_errors.push_back(
          round_error_count > 0 ? round_error_sum / round_error_count : 0.0);
      round_error_sum = 0.0;
      round_error_count = 0;
    }
  };

  int epoch_offset = 0;
  auto run_step = [&](int step) {
    const int round = step / kappa;
    if (step % kappa == 0) {
      if (step > 0) flush_round_errors();
      if (config.strategy == PartitionStrategy::Random && step > 0)
        scheme = make_random_partition(
            model, config.policy, kappa,
            derive_seed(config.seed,
                        {kStreamPartition, static_cast<std::uint64_t>(round)}));
      out.convergence.grad_norms.push_back(
          probe_gradient_norm(model, masks, probes));
    }

    const StepSchedule sched = schedule_indices(step, kappa);
    if (!sched.prune_is_noop) {
      // The group grown at the previous step is the dense one; for a fixed
      // scheme it is exactly groups[sched.prune].
      const std::vector<int> &target =
          previously_grown
              ? *previously_grown
              : scheme.groups[static_cast<std::size_t>(sched.prune)];
      PruneResult pruned = arg_prune_to(model, config.policy, target);
      masks.merge(pruned.fragment);
      tracker.track(masks);
      optimizer.reset_momentum();
      if (pruned.mask_error) {
        round_error_sum += *pruned.mask_error;
        ++round_error_count;
      }
      event_row(step, round, "prune", sched.prune, pruned.mask_error);
      out.mask_events.push_back({step, "prune", masks});
    }

    const std::vector<int> &grow_group =
        scheme.groups[static_cast<std::size_t>(sched.grow)];
    arg_grow_to(masks, grow_group);
    tracker.track(masks);
    optimizer.reset_momentum();
    event_row(step, round, "grow", sched.grow, std::nullopt);
    out.mask_events.push_back({step, "grow", masks});

    PhaseSpec phase{step, 0, config.epochs_per_step, 0, config.batch_size,
                    config.seed};
    epoch_offset += train_phase(model, masks, optimizer, data, phase,
                                &out.record, {step, round, epoch_offset}, annotate);
    previously_grown = grow_group;
  };

  for (int step = 0; step < total_steps; ++step) {
    auto tag = [step](const char *what) {
      return "step " + std::to_string(step) + ": " + what;
    };
    try {
      run_step(step);
    } catch (const NumericError &e) {
      throw NumericError(tag(e.what()));
    } catch (const ConfigError &e) {
      throw ConfigError(tag(e.what()));
    } catch (const ShapeError &e) {
      throw ShapeError(tag(e.what()));
    } catch (const UsageError &e) {
      throw UsageError(tag(e.what()));
    }
  }
  flush_round_errors();
  out.convergence.rounds = static_cast<int>(out.convergence.grad_norms.size());
  if (out.convergence.mask_errors.size() < out.convergence.grad_norms.size())
    out.convergence.mask_errors.resize(out.convergence.grad_norms.size(), 0.0);

  // Final prune of the remaining dense group, then fine-tune with frozen
  // masks.
  if (previously_grown) {
    const int last_round = (total_steps - 1) / kappa;
    PruneResult pruned = arg_prune_to(model, config.policy, *previously_grown);
    masks.merge(pruned.fragment);
    tracker.track(masks);
    optimizer.reset_momentum();
    event_row(total_steps, last_round, "prune", (total_steps - 1) % kappa,
              pruned.mask_error);
    out.mask_events.push_back({total_steps, "prune", masks});
  }
  if (config.finetune_epochs > 0) {
    PhaseSpec phase{total_steps, 0, config.finetune_epochs, 0,
                    config.batch_size, config.seed};
    const int round = total_steps > 0 ? (total_steps - 1) / kappa + 1 : 0;
    train_phase(model, masks, optimizer, data, phase, &out.record,
                {total_steps, round, epoch_offset}, annotate);
  }

  // Best fine-tune-free step by validation accuracy (metadata only; the
  // returned artifact is the final fine-tuned model).
  for (const MetricsRow &row : out.record.rows) {
    if (row.event != "epoch" || row.step >= total_steps) continue;
    if (row.val_accuracy && *row.val_accuracy > out.record.best_val_accuracy) {
      out.record.best_val_accuracy = *row.val_accuracy;
      out.record.best_step = row.step;
    }
  }
  return out;
}

} // namespace gap
