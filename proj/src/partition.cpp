#include "gap/partition.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "gap/error.hpp"
#include "gap/rng.hpp"

namespace gap {

void validate_scheme(const PartitionScheme &scheme,
                     const std::vector<int> &prunable_ids) {
  if (scheme.group_count < 1) throw ConfigError("partition count must be >= 1");
  if (static_cast<int>(scheme.groups.size()) != scheme.group_count)
    throw ConfigError("group list size != partition count");
  std::set<int> seen;
  for (const auto &group : scheme.groups) {
    if (group.empty()) throw ConfigError("empty partition group");
    for (int id : group)
      if (!seen.insert(id).second)
        throw ConfigError("layer appears in two partition groups");
  }
  std::set<int> expected(prunable_ids.begin(), prunable_ids.end());
  if (seen != expected)
    throw ConfigError("partition groups do not cover the prunable layers");
}

PartitionScheme make_contiguous_partitions(
    const std::vector<int> &layer_ids,
    const std::vector<std::size_t> &param_counts, int kappa) {
  const int n = static_cast<int>(layer_ids.size());
  if (layer_ids.size() != param_counts.size())
    throw ConfigError("layer id / param count length mismatch");
  if (kappa < 1 || kappa > n)
    throw ConfigError("partition count outside [1, prunable layer count]");

  std::size_t total = 0;
  for (std::size_t c : param_counts) total += c;
  const double ideal = static_cast<double>(total) / static_cast<double>(kappa);

  PartitionScheme scheme;
  scheme.group_count = kappa;
  scheme.strategy = PartitionStrategy::Contiguous;

  int begin = 0;
  double consumed = 0.0;
  for (int g = 0; g < kappa; ++g) {
    const int groups_left_after = kappa - g - 1;
    const double target = consumed + ideal;
    int end = begin; // inclusive index of the last layer taken
    double cum = consumed + static_cast<double>(param_counts[static_cast<std::size_t>(begin)]);
    while (end + 1 < n - groups_left_after) {
      const double next = cum + static_cast<double>(
                                    param_counts[static_cast<std::size_t>(end + 1)]);
      if (std::abs(next - target) <= std::abs(cum - target)) {
        ++end;
        cum = next;
      } else {
        break;
      }
    }
    if (g == kappa - 1) end = n - 1; // last group takes the remainder
    std::vector<int> group;
    for (int i = begin; i <= end; ++i)
      group.push_back(layer_ids[static_cast<std::size_t>(i)]);
    for (int i = begin; i <= end; ++i)
      consumed += static_cast<double>(param_counts[static_cast<std::size_t>(i)]);
    scheme.groups.push_back(std::move(group));
    begin = end + 1;
  }
  validate_scheme(scheme, layer_ids);
  return scheme;
}

PartitionScheme make_contiguous_partitions(const Model &model,
                                           const SparsityPolicy &policy,
                                           int kappa) {
  const std::vector<int> ids = prunable_layers(model, policy);
  std::vector<std::size_t> counts;
  counts.reserve(ids.size());
  for (int id : ids)
    counts.push_back(model.layers()[static_cast<std::size_t>(id)].weight.numel());
  return make_contiguous_partitions(ids, counts, kappa);
}

PartitionScheme make_random_partition(const std::vector<int> &layer_ids,
                                      int kappa, std::uint64_t seed) {
  const int n = static_cast<int>(layer_ids.size());
  if (kappa < 1 || kappa > n)
    throw ConfigError("cannot make that many nonempty groups");

  Rng rng(seed);
  PartitionScheme scheme;
  scheme.group_count = kappa;
  scheme.strategy = PartitionStrategy::Random;
  scheme.groups.assign(static_cast<std::size_t>(kappa), {});

  std::vector<int> assignment(static_cast<std::size_t>(n));
  while (true) {
    std::vector<bool> used(static_cast<std::size_t>(kappa), false);
    for (int i = 0; i < n; ++i) {
      const int g = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(kappa)));
      assignment[static_cast<std::size_t>(i)] = g;
      used[static_cast<std::size_t>(g)] = true;
    }
    if (std::all_of(used.begin(), used.end(), [](bool b) { return b; })) break;
  }
  for (int i = 0; i < n; ++i)
    scheme.groups[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])]
        .push_back(layer_ids[static_cast<std::size_t>(i)]);
  validate_scheme(scheme, layer_ids);
  return scheme;
}

PartitionScheme make_random_partition(const Model &model,
                                      const SparsityPolicy &policy, int kappa,
                                      std::uint64_t seed) {
  return make_random_partition(prunable_layers(model, policy), kappa, seed);
}

StepSchedule schedule_indices(int step, int kappa) {
  if (step < 0) throw UsageError("step must be nonnegative");
  if (kappa < 1) throw UsageError("kappa must be >= 1");
  StepSchedule s;
  s.grow = step % kappa;
  s.prune = ((step - 1) % kappa + kappa) % kappa;
  s.prune_is_noop = (step == 0);
  return s;
}

} // namespace gap
