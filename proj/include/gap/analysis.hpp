#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "gap/dataset.hpp"
#include "gap/model.hpp"
#include "gap/sparsity.hpp"

namespace gap {

// OR-accumulates which prunable weights have ever been active (m = 1).
// Coverage fraction is non-decreasing over a run.
class CoverageTracker {
public:
  explicit CoverageTracker(const MaskSet &initial);

  void track(const MaskSet &masks);

  double fraction() const;
  const std::vector<double> &history() const { return history_; }
  // Number of track() calls (the initial mask counts as the first) taken to
  // reach full coverage; empty while uncovered weights remain.
  std::optional<int> updates_to_full() const { return updates_to_full_; }

private:
  std::map<int, std::vector<std::uint8_t>> ever_active_;
  std::vector<double> history_;
  std::optional<int> updates_to_full_;
  int updates_ = 0;
};

// Expected steps for with-replacement sampling to touch all n items once:
// n * H_n. Only the one-item-per-step case has this closed form.
double coupon_expected_steps(int n, int per_step = 1);

// Without-replacement schedule: ceil(n / per_step) steps, always.
int scheduled_coverage_steps(int n, int per_step = 1);

struct CoverageSim {
  double mean = 0.0;
  double stddev = 0.0;
  std::map<int, int> histogram; // steps -> trial count
};

// Monte-Carlo steps-to-full-coverage when per_step distinct items are drawn
// with replacement each step.
CoverageSim simulate_random_coverage(int n, int per_step, int trials,
                                     std::uint64_t seed);

// Distribution of the number of never-activated weights in one layer after
// `updates` random-explore mask updates. Exact: a hypergeometric chain over
// the never-active count (grow choices are uniform over inactive entries, so
// the magnitude-based prune side cannot influence it). Layer has n weights,
// `active` of them initially active, `swap` swapped per update.
std::vector<double> never_active_distribution(int n, int active, int swap,
                                              int updates);

// P(full coverage) under the same model.
double full_coverage_probability(int n, int active, int swap, int updates);

// Squared L2 norm of the probe-set gradient of the masked model, restricted
// to active coordinates (biases and exempt layers always count as active).
double probe_gradient_norm(const Model &model, const MaskSet &masks,
                           const std::vector<Batch> &probes);

// Mean over batches of ||grad_batch - grad_probe||^2 where grad_probe is the
// sample-weighted mean gradient over the same batches. Active coordinates
// only, as above.
double estimate_grad_variance(const Model &model, const MaskSet &masks,
                              const std::vector<Batch> &batches);

// Per-round convergence diagnostics assembled from a run.
struct ConvergenceReport {
  std::vector<double> grad_norms;  // probe gradient norm at each round start
  std::vector<double> mask_errors; // mean mask error over the round's prunes
  double grad_variance = 0.0;
  int rounds = 0;
};

} // namespace gap
