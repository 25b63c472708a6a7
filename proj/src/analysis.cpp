#include "gap/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gap/autodiff.hpp"
#include "gap/error.hpp"
#include "gap/rng.hpp"

namespace gap {

CoverageTracker::CoverageTracker(const MaskSet &initial) {
  for (const auto &[id, mask] : initial.layers) ever_active_[id] = mask;
  track(initial); // the initial mask is the first update
}

void CoverageTracker::track(const MaskSet &masks) {
  for (const auto &[id, mask] : masks.layers) {
    auto it = ever_active_.find(id);
    if (it == ever_active_.end()) {
      ever_active_[id] = mask;
      continue;
    }
    if (it->second.size() != mask.size())
      throw ShapeError("coverage tracker mask size changed");
    for (std::size_t i = 0; i < mask.size(); ++i)
      it->second[i] = static_cast<std::uint8_t>(it->second[i] | mask[i]);
  }
  ++updates_;
  const double f = fraction();
  history_.push_back(f);
  if (!updates_to_full_ && f == 1.0) updates_to_full_ = updates_;
}

double CoverageTracker::fraction() const {
  std::size_t active = 0;
  std::size_t total = 0;
  for (const auto &[id, mask] : ever_active_) {
    total += mask.size();
    for (std::uint8_t m : mask) active += (m != 0);
  }
  if (total == 0) return 1.0;
  return static_cast<double>(active) / static_cast<double>(total);
}

double coupon_expected_steps(int n, int per_step) {
  if (n < 1) throw UsageError("n must be >= 1");
  if (per_step != 1)
    throw UsageError("closed form only covers per_step == 1; simulate instead");
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / static_cast<double>(i);
  return static_cast<double>(n) * h;
}

int scheduled_coverage_steps(int n, int per_step) {
  if (n < 1 || per_step < 1) throw UsageError("n and per_step must be >= 1");
  return (n + per_step - 1) / per_step;
}

CoverageSim simulate_random_coverage(int n, int per_step, int trials,
                                     std::uint64_t seed) {
  if (n < 1 || per_step < 1 || per_step > n)
    throw UsageError("need 1 <= per_step <= n");
  if (trials < 1) throw UsageError("trials must be >= 1");

  Rng rng(seed);
  CoverageSim sim;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n));
  std::vector<int> items(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) items[static_cast<std::size_t>(i)] = i;

  for (int t = 0; t < trials; ++t) {
    std::fill(seen.begin(), seen.end(), 0);
    int covered = 0;
    int steps = 0;
    while (covered < n) {
      ++steps;
      if (per_step == 1) {
        const auto pick = static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(n)));
        if (!seen[pick]) {
          seen[pick] = 1;
          ++covered;
        }
      } else {
        // Partial Fisher-Yates: the first per_step entries are a uniform
        // distinct sample.
        for (int i = 0; i < per_step; ++i) {
          const auto j = static_cast<std::size_t>(
              i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n - i))));
          std::swap(items[static_cast<std::size_t>(i)], items[j]);
          const auto pick = static_cast<std::size_t>(items[static_cast<std::size_t>(i)]);
          if (!seen[pick]) {
            seen[pick] = 1;
            ++covered;
          }
        }
      }
    }
    sum += steps;
    sum_sq += static_cast<double>(steps) * steps;
    ++sim.histogram[steps];
  }
  sim.mean = sum / trials;
  const double var =
      (sum_sq - sum * sum / trials) / std::max(1, trials - 1);
  sim.stddev = std::sqrt(std::max(0.0, var));
  return sim;
}

std::vector<double> never_active_distribution(int n, int active, int swap,
                                              int updates) {
  if (n < 1 || active < 0 || active > n)
    throw UsageError("need 0 <= active <= n");
  if (swap < 0 || swap > active)
    throw UsageError("swap count out of range");
  if (updates < 0) throw UsageError("updates must be >= 0");

  const int inactive = n - active;
  // dist[u] = P(u never-active weights remain).
  std::vector<double> dist(static_cast<std::size_t>(inactive) + 1, 0.0);
  dist[static_cast<std::size_t>(inactive)] = 1.0;
  if (swap == 0 || inactive == 0) return dist;

  // At grow time the layer has inactive + swap inactive entries (swap actives
  // were just pruned; pruned entries are already covered). The grow picks
  // `swap` of them uniformly, so the number of never-active entries it hits
  // is hypergeometric.
  const int pool = inactive + swap;
  auto log_choose = [](int a, int b) {
    if (b < 0 || b > a) return -std::numeric_limits<double>::infinity();
    return std::lgamma(a + 1.0) - std::lgamma(b + 1.0) - std::lgamma(a - b + 1.0);
  };

  for (int step = 0; step < updates; ++step) {
    std::vector<double> next(dist.size(), 0.0);
    for (int u = 0; u <= inactive; ++u) {
      const double p = dist[static_cast<std::size_t>(u)];
      if (p == 0.0) continue;
      const int d_max = std::min(u, swap);
      for (int d = 0; d <= d_max; ++d) {
        const double logp = log_choose(u, d) + log_choose(pool - u, swap - d) -
                            log_choose(pool, swap);
        next[static_cast<std::size_t>(u - d)] += p * std::exp(logp);
      }
    }
    dist = std::move(next);
  }
  return dist;
}

double full_coverage_probability(int n, int active, int swap, int updates) {
  return never_active_distribution(n, active, swap, updates)[0];
}

namespace {

// Sample-weighted mean gradient over batches, as active-coordinate vector.
std::vector<double> flatten_active(const Model &model, const MaskSet &masks,
                                   const Gradients &grads) {
  std::vector<double> flat;
  for (std::size_t li = 0; li < model.layer_count(); ++li) {
    const LayerGrad &g = grads.layers[li];
    auto it = masks.layers.find(static_cast<int>(li));
    for (std::size_t i = 0; i < g.weight.numel(); ++i) {
      if (it != masks.layers.end() && it->second[i] == 0) continue;
      flat.push_back(g.weight.data[i]);
    }
    flat.insert(flat.end(), g.bias.begin(), g.bias.end());
  }
  return flat;
}

std::vector<double> mean_gradient(const Model &model, const MaskSet &masks,
                                  const std::vector<Batch> &batches,
                                  std::vector<std::vector<double>> *per_batch) {
  if (batches.empty()) throw UsageError("need at least one batch");
  std::vector<double> mean;
  std::size_t total = 0;
  for (const Batch &batch : batches) {
    ForwardCache cache = forward(model, batch.x, batch.y);
    Gradients grads = backward(cache);
    std::vector<double> flat = flatten_active(model, masks, grads);
    if (mean.empty()) mean.assign(flat.size(), 0.0);
    const double weight = static_cast<double>(batch.y.size());
    for (std::size_t i = 0; i < flat.size(); ++i) mean[i] += weight * flat[i];
    total += batch.y.size();
    if (per_batch) per_batch->push_back(std::move(flat));
  }
  for (double &v : mean) v /= static_cast<double>(total);
  return mean;
}

} // namespace

double probe_gradient_norm(const Model &model, const MaskSet &masks,
                           const std::vector<Batch> &probes) {
  const std::vector<double> mean = mean_gradient(model, masks, probes, nullptr);
  double norm_sq = 0.0;
  for (double v : mean) norm_sq += v * v;
  return norm_sq;
}

double estimate_grad_variance(const Model &model, const MaskSet &masks,
                              const std::vector<Batch> &batches) {
  std::vector<std::vector<double>> per_batch;
  const std::vector<double> mean = mean_gradient(model, masks, batches, &per_batch);
  double total = 0.0;
  for (const auto &flat : per_batch) {
    double dist_sq = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      const double d = flat[i] - mean[i];
      dist_sq += d * d;
    }
    total += dist_sq;
  }
  return total / static_cast<double>(per_batch.size());
}

} // namespace gap
