#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gap/dataset.hpp"
#include "gap/gap_cyclic.hpp"
#include "gap/optimizer.hpp"
#include "gap/record.hpp"
#include "gap/sparsity.hpp"

namespace gap {

struct GmpSchedule {
  int start_epoch = 0; // first prune event
  int end_epoch = 0;   // final ratio reached here
  int interval = 1;    // epochs between prune events
};

struct BaselineConfig {
  int budget_epochs = 1;
  SparsityPolicy policy;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;

  GmpSchedule gmp;
  double explore_fraction = 0.1; // per-update swapped share of active weights
  double oneshot_split = 0.5;    // dense share of the budget

  // Optional phase lengths for the dense run (sum == budget). Mirrors a
  // cyclic run's restarted schedules for bit-exact comparisons; empty means
  // one phase over the whole budget.
  std::vector<int> dense_phases;
};

// Quality ceiling: plain training, no masks.
RunOutput run_dense(const BaselineConfig &config, Model &model,
                    const Dataset &data, const std::string &run_id = "dense");

// Magnitude prune schedule ramping to the target ratio between start and end
// epochs: at event epoch t the ratio is target * (1 - (1 - progress)^3).
// Masks only ever remove weights.
RunOutput run_gmp(const BaselineConfig &config, Model &model,
                  const Dataset &data, const std::string &run_id = "gmp");

// Fixed random mask from initialization to the end.
RunOutput run_static_random(const BaselineConfig &config, Model &model,
                            const Dataset &data,
                            const std::string &run_id = "static-random");

// Train dense for the first part of the budget, prune once, fine-tune.
RunOutput run_one_shot(const BaselineConfig &config, Model &model,
                       const Dataset &data,
                       const std::string &run_id = "one-shot");

// Constant-sparsity mask exploration: at the end of every epoch, each layer
// prunes its lowest-magnitude active weights and grows an equal count of
// random inactive ones at value zero.
RunOutput run_random_explore(const BaselineConfig &config, Model &model,
                             const Dataset &data,
                             const std::string &run_id = "random-explore");

} // namespace gap
