#include "gap/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "gap/analysis.hpp"
#include "gap/error.hpp"
#include "gap/rng.hpp"
#include "gap/train.hpp"

namespace gap {

namespace {

void validate_baseline(const BaselineConfig &config) {
  validate_policy(config.policy);
  validate_optimizer(config.optimizer);
  if (config.budget_epochs < 1) throw ConfigError("epoch budget must be >= 1");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");
}

MetricsRow event_row(const RunRecord &record, int step, int epoch,
                     const char *kind) {
  MetricsRow row;
  row.run_id = record.run_id;
  row.method = record.method;
  row.step = step;
  row.round = 0;
  row.epoch = epoch;
  row.event = kind;
  return row;
}

} // namespace

RunOutput run_dense(const BaselineConfig &config, Model &model,
                    const Dataset &data, const std::string &run_id) {
  validate_baseline(config);
  std::vector<int> phases = config.dense_phases;
  if (phases.empty()) phases.push_back(config.budget_epochs);
  if (std::accumulate(phases.begin(), phases.end(), 0) != config.budget_epochs)
    throw ConfigError("dense phase lengths must sum to the epoch budget");

  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "dense";

  MaskSet no_masks;
  SgdOptimizer optimizer(config.optimizer, model);
  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = 0.0;
    row.coverage = 1.0;
    row.flops = flops_estimate(model, no_masks);
  };

  int epoch_offset = 0;
  for (std::size_t p = 0; p < phases.size(); ++p) {
    optimizer.reset_momentum();
    PhaseSpec phase{static_cast<int>(p), 0, phases[p], 0, config.batch_size,
                    config.seed};
    epoch_offset += train_phase(model, no_masks, optimizer, data, phase,
                                &out.record,
                                {static_cast<int>(p), 0, epoch_offset}, annotate);
  }
  return out;
}

RunOutput run_static_random(const BaselineConfig &config, Model &model,
                            const Dataset &data, const std::string &run_id) {
  validate_baseline(config);
  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "static-random";

  out.masks = init_sparse(model, config.policy,
                          derive_seed(config.seed, {kStreamInitMask}));
  CoverageTracker tracker(out.masks);
  SgdOptimizer optimizer(config.optimizer, model);
  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = sparsity_of(out.masks);
    row.coverage = tracker.fraction();
    row.flops = flops_estimate(model, out.masks);
  };

  PhaseSpec phase{0, 0, config.budget_epochs, 0, config.batch_size, config.seed};
  train_phase(model, out.masks, optimizer, data, phase, &out.record, {0, 0, 0},
              annotate);
  return out;
}

RunOutput run_one_shot(const BaselineConfig &config, Model &model,
                       const Dataset &data, const std::string &run_id) {
  validate_baseline(config);
  if (config.oneshot_split <= 0.0 || config.oneshot_split >= 1.0)
    throw ConfigError("one-shot split must lie in (0, 1)");
  const int dense_epochs = std::max(
      1, static_cast<int>(std::floor(
             config.oneshot_split * static_cast<double>(config.budget_epochs) + 0.5)));
  if (dense_epochs >= config.budget_epochs)
    throw ConfigError("one-shot split leaves no fine-tune epochs");

  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "one-shot";

  MaskSet no_masks;
  SgdOptimizer optimizer(config.optimizer, model);
  CoverageTracker tracker(MaskSet::dense_like(model, config.policy.exempt_layers));

  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = sparsity_of(out.masks);
    row.coverage = tracker.fraction();
    row.flops = flops_estimate(model, out.masks);
  };

  PhaseSpec dense_phase{0, 0, dense_epochs, 0, config.batch_size, config.seed};
  int epoch_offset = train_phase(model, no_masks, optimizer, data, dense_phase,
                                 &out.record, {0, 0, 0}, annotate);

  const std::vector<int> scope = prunable_layers(model, config.policy);
  PruneResult pruned = arg_prune_to(model, config.policy, scope);
  out.masks = pruned.fragment;
  tracker.track(out.masks);
  optimizer.reset_momentum();
  {
    MetricsRow row = event_row(out.record, 1, epoch_offset, "prune");
    row.delta_sq = pruned.mask_error;
    annotate(row);
    out.record.add_row(std::move(row));
  }
  out.mask_events.push_back({epoch_offset, "prune", out.masks});

  PhaseSpec ft_phase{1, 0, config.budget_epochs - dense_epochs, 0,
                     config.batch_size, config.seed};
  train_phase(model, out.masks, optimizer, data, ft_phase, &out.record,
              {1, 0, epoch_offset}, annotate);
  return out;
}

RunOutput run_gmp(const BaselineConfig &config, Model &model,
                  const Dataset &data, const std::string &run_id) {
  validate_baseline(config);
  const GmpSchedule &sched = config.gmp;
  if (sched.start_epoch < 0 || sched.start_epoch >= sched.end_epoch ||
      sched.end_epoch > config.budget_epochs || sched.interval < 1)
    throw ConfigError("gmp schedule misconfigured");

  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "gmp";

  SgdOptimizer optimizer(config.optimizer, model);
  CoverageTracker tracker(MaskSet::dense_like(model, config.policy.exempt_layers));
  const std::vector<int> scope = prunable_layers(model, config.policy);

  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = sparsity_of(out.masks);
    row.coverage = tracker.fraction();
    row.flops = flops_estimate(model, out.masks);
  };

  // Cubic ramp from 0 at start_epoch to the target at end_epoch.
  auto ratio_at = [&](int epoch) {
    const double progress = static_cast<double>(epoch - sched.start_epoch) /
                            static_cast<double>(sched.end_epoch - sched.start_epoch);
    const double clamped = std::clamp(progress, 0.0, 1.0);
    const double remain = 1.0 - clamped;
    return config.policy.ratio * (1.0 - remain * remain * remain);
  };
  auto is_event = [&](int epoch) {
    if (epoch < sched.start_epoch || epoch > sched.end_epoch) return false;
    if (epoch == sched.end_epoch) return true;
    return (epoch - sched.start_epoch) % sched.interval == 0;
  };

  auto prune_event = [&](int epoch) {
    SparsityPolicy now = config.policy;
    now.ratio = ratio_at(epoch);
    PruneResult pruned = arg_prune_to(model, now, scope);
    if (out.masks.layers.empty())
      out.masks = pruned.fragment;
    else
      out.masks.merge(pruned.fragment);
    tracker.track(out.masks);
    MetricsRow row = event_row(out.record, 0, epoch, "prune");
    row.delta_sq = pruned.mask_error;
    annotate(row);
    out.record.add_row(std::move(row));
    out.mask_events.push_back({epoch, "prune", out.masks});
  };

  for (int epoch = 0; epoch < config.budget_epochs; ++epoch) {
    if (is_event(epoch)) prune_event(epoch);
    PhaseSpec segment{0, epoch, 1, config.budget_epochs, config.batch_size,
                      config.seed};
    train_phase(model, out.masks, optimizer, data, segment, &out.record,
                {0, 0, epoch}, annotate);
  }
  if (is_event(config.budget_epochs)) prune_event(config.budget_epochs);
  return out;
}

RunOutput run_random_explore(const BaselineConfig &config, Model &model,
                             const Dataset &data, const std::string &run_id) {
  validate_baseline(config);
  if (config.explore_fraction <= 0.0 || config.explore_fraction >= 1.0)
    throw ConfigError("explore fraction must lie in (0, 1)");
  if (config.policy.granularity != Granularity::Element)
    throw ConfigError("random-explore swaps individual weights only");

  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "random-explore";

  out.masks = init_sparse(model, config.policy,
                          derive_seed(config.seed, {kStreamInitMask}));
  CoverageTracker tracker(out.masks);
  SgdOptimizer optimizer(config.optimizer, model);

  // Per-layer swap counts are fixed by the (constant) active counts.
  std::vector<std::pair<int, std::size_t>> swaps; // layer id -> count
  for (const auto &[id, mask] : out.masks.layers) {
    std::size_t active = 0;
    for (std::uint8_t m : mask) active += (m != 0);
    const auto swap = static_cast<std::size_t>(std::floor(
        config.explore_fraction * static_cast<double>(active) + 0.5));
    if (swap >= active)
      throw ConfigError("explore fraction would leave no active weight");
    swaps.emplace_back(id, swap);
  }

  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = sparsity_of(out.masks);
    row.coverage = tracker.fraction();
    row.flops = flops_estimate(model, out.masks);
  };

  auto explore_update = [&](int epoch) {
    for (const auto &[id, swap] : swaps) {
      if (swap == 0) continue;
      auto &mask = out.masks.layers[id];
      Tensor &weight =
          model.mutable_layers()[static_cast<std::size_t>(id)].weight;

      // Prune the lowest-magnitude active entries.
      std::vector<std::size_t> active_idx;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) active_idx.push_back(i);
      std::sort(active_idx.begin(), active_idx.end(),
                [&](std::size_t a, std::size_t b) {
                  const double da = std::abs(weight.data[a]);
                  const double db = std::abs(weight.data[b]);
                  return da != db ? da < db : a < b;
                });
      for (std::size_t i = 0; i < swap; ++i) {
        mask[active_idx[i]] = 0;
        weight.data[active_idx[i]] = 0.0;
      }

      // Grow an equal count of random inactive entries at value zero.
      std::vector<std::size_t> inactive_idx;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (!mask[i]) inactive_idx.push_back(i);
      Rng rng(derive_seed(config.seed,
                          {kStreamExplore, static_cast<std::uint64_t>(epoch),
                           static_cast<std::uint64_t>(id)}));
      for (std::size_t i = 0; i < swap; ++i) {
        const auto j = static_cast<std::size_t>(
            i + rng.next_below(inactive_idx.size() - i));
        std::swap(inactive_idx[i], inactive_idx[j]);
        mask[inactive_idx[i]] = 1;
        weight.data[inactive_idx[i]] = 0.0;
      }
    }
    tracker.track(out.masks);
    MetricsRow row = event_row(out.record, 0, epoch, "grow");
    annotate(row);
    out.record.add_row(std::move(row));
    out.mask_events.push_back({epoch, "explore", out.masks});
  };

  for (int epoch = 0; epoch < config.budget_epochs; ++epoch) {
    PhaseSpec segment{0, epoch, 1, config.budget_epochs, config.batch_size,
                      config.seed};
    train_phase(model, out.masks, optimizer, data, segment, &out.record,
                {0, 0, epoch}, annotate);
    explore_update(epoch);
  }
  return out;
}

} // namespace gap
