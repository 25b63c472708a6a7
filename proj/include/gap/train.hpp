#pragma once

#include <cstdint>
#include <functional>

#include "gap/dataset.hpp"
#include "gap/optimizer.hpp"
#include "gap/record.hpp"
#include "gap/sparsity.hpp"

namespace gap {

// A segment of one training phase. The learning-rate schedule spans
// schedule_span epochs; this call runs epochs [start_epoch,
// start_epoch + epochs) of it. Batch shuffles derive from (master_seed,
// phase_index, absolute epoch), so two runs that line their phases up
// consume identical data and produce bit-identical parameters, and a phase
// run in segments (for mid-phase mask events) equals the phase run in one
// call.
struct PhaseSpec {
  int phase_index = 0;
  int start_epoch = 0;
  int epochs = 0;
  int schedule_span = 0; // defaults to epochs when <= 0
  std::size_t batch_size = 32;
  std::uint64_t master_seed = 0;
};

struct PhaseRowInfo {
  int step = 0;
  int round = 0;
  int epoch_offset = 0; // global epoch of the segment's first epoch
};

// Runs the segment; emits one row per epoch into `record` (when non-null)
// after filling the run-specific columns via `annotate`. Returns the number
// of epochs run.
int train_phase(Model &model, const MaskSet &masks, SgdOptimizer &optimizer,
                const Dataset &data, const PhaseSpec &spec,
                RunRecord *record, const PhaseRowInfo &info,
                const std::function<void(MetricsRow &)> &annotate);

} // namespace gap
