#pragma once

#include <cstdint>
#include <vector>

#include "gap/model.hpp"
#include "gap/sparsity.hpp"

namespace gap {

enum class PartitionStrategy { Contiguous, Random };

// Disjoint, collectively exhaustive groups of prunable layer ids. Immutable
// after construction; freely shared.
struct PartitionScheme {
  int group_count = 0;
  std::vector<std::vector<int>> groups;
  PartitionStrategy strategy = PartitionStrategy::Contiguous;
};

void validate_scheme(const PartitionScheme &scheme,
                     const std::vector<int> &prunable_ids);

// Contiguous groups with greedily balanced parameter counts: each boundary
// is placed where the running count lands closest to the ideal N/kappa,
// while leaving at least one layer per remaining group.
PartitionScheme make_contiguous_partitions(const std::vector<int> &layer_ids,
                                           const std::vector<std::size_t> &param_counts,
                                           int kappa);
PartitionScheme make_contiguous_partitions(const Model &model,
                                           const SparsityPolicy &policy,
                                           int kappa);

// Uniformly random assignment of layers into kappa nonempty groups
// (rejection-sampled, so every surjective assignment is equally likely).
PartitionScheme make_random_partition(const std::vector<int> &layer_ids,
                                      int kappa, std::uint64_t seed);
PartitionScheme make_random_partition(const Model &model,
                                      const SparsityPolicy &policy, int kappa,
                                      std::uint64_t seed);

// Grow/prune group indices for one step of the cyclic schedule. The step-0
// prune targets nothing dense yet, so it is flagged as a no-op.
struct StepSchedule {
  int grow = 0;
  int prune = 0;
  bool prune_is_noop = false;
};

StepSchedule schedule_indices(int step, int kappa);

} // namespace gap
