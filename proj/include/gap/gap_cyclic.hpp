#pragma once

#include <cstdint>
#include <string>

#include "gap/analysis.hpp"
#include "gap/dataset.hpp"
#include "gap/optimizer.hpp"
#include "gap/partition.hpp"
#include "gap/record.hpp"
#include "gap/sparsity.hpp"

namespace gap {

struct GapConfig {
  int partitions = 1;      // disjoint layer groups rotated through
  int steps = 1;           // grow/train/prune cycles
  int epochs_per_step = 1; // training epochs between mask events
  int finetune_epochs = 0; // frozen-mask epochs after the final prune
  SparsityPolicy policy;
  OptimizerConfig optimizer;
  PartitionStrategy strategy = PartitionStrategy::Contiguous;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;
  std::size_t probe_samples = 512; // probe set for gradient-norm diagnostics
  int worker_timeout_ms = 60000;   // parallel runs only
};

// Strict front-door validation (the run functions themselves also accept
// degenerate steps/epochs so equivalence tests can exercise edge shapes).
void validate_gap_config(const GapConfig &config, const Model &model);

// Full mask state right after a grow/prune/explore event; kept for
// diagnostics and mask-evolution checks.
struct MaskEvent {
  int step = 0; // scheduler step (gap runs) or epoch (baselines)
  std::string kind;
  MaskSet masks;
};

struct RunOutput {
  MaskSet masks;
  RunRecord record;
  ConvergenceReport convergence;
  std::vector<MaskEvent> mask_events;
};

// Cyclic grow-and-prune: starting from a random sparse model, each step
// prunes the previously dense group back to the target ratio, grows the next
// group dense, and trains with a per-step restarted schedule. After the last
// step the remaining dense group is pruned and the model is fine-tuned with
// frozen masks. The random partition strategy redraws the groups at each
// round boundary.
RunOutput run_cgap(const GapConfig &config, Model &model, const Dataset &data,
                   const std::string &run_id = "cgap");

} // namespace gap
