#include "gap/sparsity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "gap/error.hpp"
#include "gap/rng.hpp"

namespace gap {

namespace {

// Half-up rounding; the count rule used everywhere a ratio meets a size.
std::size_t prune_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(n) + 0.5));
}

struct BlockRef {
  int layer_id;
  std::size_t begin; // flat offset
  std::size_t length;
};

// 1x8 blocks laid out per row; a row whose length is not a multiple of 8
// contributes one trailing short block.
std::vector<BlockRef> layer_blocks(int layer_id, const Tensor &weight) {
  std::vector<BlockRef> blocks;
  const std::size_t rows = weight.rows();
  const std::size_t cols = weight.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; c += kBlockWidth) {
      const std::size_t len = std::min(kBlockWidth, cols - c);
      blocks.push_back({layer_id, r * cols + c, len});
    }
  }
  return blocks;
}

double block_score(const Tensor &weight, const BlockRef &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < b.length; ++i)
    s += std::abs(weight.data[b.begin + i]);
  return s;
}

} // namespace

std::size_t MaskSet::zero_count() const {
  std::size_t zeros = 0;
  for (const auto &[id, mask] : layers)
    for (std::uint8_t m : mask) zeros += (m == 0);
  return zeros;
}

std::size_t MaskSet::entry_count() const {
  std::size_t n = 0;
  for (const auto &[id, mask] : layers) n += mask.size();
  return n;
}

void MaskSet::merge(const MaskSet &fragment) {
  for (const auto &[id, mask] : fragment.layers) layers[id] = mask;
}

MaskSet MaskSet::dense_like(const Model &model, const std::set<int> &exempt) {
  MaskSet out;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const int id = static_cast<int>(i);
    if (exempt.count(id)) continue;
    out.layers[id].assign(model.layers()[i].weight.numel(), 1);
  }
  return out;
}

void validate_policy(const SparsityPolicy &policy) {
  if (!(policy.ratio >= 0.0) || policy.ratio >= 1.0)
    throw ConfigError("sparsity ratio must lie in [0, 1)");
}

std::vector<int> prunable_layers(const Model &model,
                                 const SparsityPolicy &policy) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < model.layer_count(); ++i)
    if (!policy.exempt_layers.count(static_cast<int>(i)))
      ids.push_back(static_cast<int>(i));
  return ids;
}

PruneResult arg_prune_to(Model &model, const SparsityPolicy &policy,
                         std::span<const int> scope) {
  validate_policy(policy);

  std::vector<int> scoped;
  for (int id : scope) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.layer_count())
      throw ConfigError("prune scope references unknown layer");
    if (policy.exempt_layers.count(id)) continue;
    scoped.push_back(id);
  }
  std::sort(scoped.begin(), scoped.end());
  scoped.erase(std::unique(scoped.begin(), scoped.end()), scoped.end());
  if (scoped.empty()) throw ConfigError("prune scope is empty");

  for (int id : scoped) {
    const Tensor &w = model.layers()[static_cast<std::size_t>(id)].weight;
    if (w.numel() == 0) throw ConfigError("prune scope has an empty array");
    check_finite(w, "prune input");
  }

  PruneResult result;
  for (int id : scoped) {
    result.fragment.layers[id].assign(
        model.layers()[static_cast<std::size_t>(id)].weight.numel(), 1);
  }

  auto mark_pruned = [&](int layer_id, std::size_t flat) {
    result.fragment.layers[layer_id][flat] = 0;
  };

  if (policy.granularity == Granularity::Element) {
    if (policy.distribution == Distribution::Uniform) {
      for (int id : scoped) {
        const Tensor &w = model.layers()[static_cast<std::size_t>(id)].weight;
        const std::size_t k = prune_count(policy.ratio, w.numel());
        std::vector<std::size_t> order(w.numel());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) {
                    const double da = std::abs(w.data[a]);
                    const double db = std::abs(w.data[b]);
                    return da != db ? da < db : a < b;
                  });
        for (std::size_t i = 0; i < k; ++i) mark_pruned(id, order[i]);
      }
    } else {
      struct Entry {
        double magnitude;
        int layer_id;
        std::size_t flat;
      };
      std::vector<Entry> entries;
      for (int id : scoped) {
        const Tensor &w = model.layers()[static_cast<std::size_t>(id)].weight;
        for (std::size_t i = 0; i < w.numel(); ++i)
          entries.push_back({std::abs(w.data[i]), id, i});
      }
      const std::size_t k = prune_count(policy.ratio, entries.size());
      std::sort(entries.begin(), entries.end(),
                [](const Entry &a, const Entry &b) {
                  if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
                  if (a.layer_id != b.layer_id) return a.layer_id < b.layer_id;
                  return a.flat < b.flat;
                });
      for (std::size_t i = 0; i < k; ++i)
        mark_pruned(entries[i].layer_id, entries[i].flat);
    }
  } else {
    struct ScoredBlock {
      double score;
      std::size_t index; // ordinal within its sort scope
      BlockRef ref;
    };
    auto prune_blocks = [&](std::vector<ScoredBlock> &blocks, std::size_t k) {
      std::sort(blocks.begin(), blocks.end(),
                [](const ScoredBlock &a, const ScoredBlock &b) {
                  return a.score != b.score ? a.score < b.score
                                            : a.index < b.index;
                });
      for (std::size_t i = 0; i < k && i < blocks.size(); ++i)
        for (std::size_t j = 0; j < blocks[i].ref.length; ++j)
          mark_pruned(blocks[i].ref.layer_id, blocks[i].ref.begin + j);
    };

    if (policy.distribution == Distribution::Uniform) {
      for (int id : scoped) {
        const Tensor &w = model.layers()[static_cast<std::size_t>(id)].weight;
        std::vector<ScoredBlock> blocks;
        for (const BlockRef &b : layer_blocks(id, w))
          blocks.push_back({block_score(w, b), blocks.size(), b});
        prune_blocks(blocks, prune_count(policy.ratio, blocks.size()));
      }
    } else {
      std::vector<ScoredBlock> blocks;
      for (int id : scoped) {
        const Tensor &w = model.layers()[static_cast<std::size_t>(id)].weight;
        for (const BlockRef &b : layer_blocks(id, w))
          blocks.push_back({block_score(w, b), blocks.size(), b});
      }
      prune_blocks(blocks, prune_count(policy.ratio, blocks.size()));
    }
  }

  result.mask_error = mask_relative_error(model, result.fragment, scoped);

  // Zero the pruned entries; kept entries stay bit-identical.
  for (int id : scoped) {
    Tensor &w = model.mutable_layers()[static_cast<std::size_t>(id)].weight;
    const auto &mask = result.fragment.layers[id];
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] == 0) w.data[i] = 0.0;
  }
  return result;
}

void arg_grow_to(MaskSet &masks, std::span<const int> layers) {
  for (int id : layers) {
    auto it = masks.layers.find(id);
    if (it == masks.layers.end())
      throw UsageError("grow target layer has no mask");
    std::fill(it->second.begin(), it->second.end(), 1);
  }
}

void apply_mask(std::span<double> weights, std::span<const std::uint8_t> mask) {
  if (weights.size() != mask.size())
    throw ShapeError("mask/weight length mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i)
    if (mask[i] == 0) weights[i] = 0.0;
}

void apply_mask(Model &model, const MaskSet &masks) {
  for (const auto &[id, mask] : masks.layers) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.layer_count())
      throw ShapeError("mask references unknown layer");
    Tensor &w = model.mutable_layers()[static_cast<std::size_t>(id)].weight;
    apply_mask(std::span<double>(w.data), mask);
  }
}

double sparsity_of(const MaskSet &masks) {
  const std::size_t total = masks.entry_count();
  if (total == 0) return 0.0;
  return static_cast<double>(masks.zero_count()) / static_cast<double>(total);
}

double sparsity_of(const MaskSet &masks, std::span<const int> scope) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (int id : scope) {
    auto it = masks.layers.find(id);
    if (it == masks.layers.end()) continue;
    total += it->second.size();
    for (std::uint8_t m : it->second) zeros += (m == 0);
  }
  if (total == 0) return 0.0;
  return static_cast<double>(zeros) / static_cast<double>(total);
}

std::optional<double> mask_relative_error(std::span<const double> weights,
                                          std::span<const std::uint8_t> mask) {
  if (weights.size() != mask.size())
    throw ShapeError("mask/weight length mismatch");
  double total = 0.0;
  double removed = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double sq = weights[i] * weights[i];
    total += sq;
    if (mask[i] == 0) removed += sq;
  }
  if (total == 0.0) return std::nullopt;
  return removed / total;
}

std::optional<double> mask_relative_error(const Model &model,
                                          const MaskSet &masks,
                                          std::span<const int> scope) {
  double total = 0.0;
  double removed = 0.0;
  for (int id : scope) {
    auto it = masks.layers.find(id);
    if (it == masks.layers.end()) continue;
    const Tensor &w = model.layers()[static_cast<std::size_t>(id)].weight;
    if (w.numel() != it->second.size())
      throw ShapeError("mask/weight length mismatch");
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double sq = w.data[i] * w.data[i];
      total += sq;
      if (it->second[i] == 0) removed += sq;
    }
  }
  if (total == 0.0) return std::nullopt;
  return removed / total;
}

std::int64_t flops_estimate(const Model &model, const MaskSet &masks) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const LinearLayer &layer = model.layers()[i];
    std::int64_t kept = static_cast<std::int64_t>(layer.weight.numel());
    auto it = masks.layers.find(static_cast<int>(i));
    if (it != masks.layers.end()) {
      kept = 0;
      for (std::uint8_t m : it->second) kept += (m != 0);
    }
    total += 2 * kept + static_cast<std::int64_t>(layer.fan_out());
  }
  return total;
}

MaskSet init_sparse(Model &model, const SparsityPolicy &policy,
                    std::uint64_t seed) {
  validate_policy(policy);
  const std::vector<int> ids = prunable_layers(model, policy);
  MaskSet masks;
  for (int id : ids)
    masks.layers[id].assign(
        model.layers()[static_cast<std::size_t>(id)].weight.numel(), 1);

  Rng rng(seed);
  if (policy.granularity == Granularity::Element) {
    if (policy.distribution == Distribution::Uniform) {
      for (int id : ids) {
        auto &mask = masks.layers[id];
        std::vector<std::size_t> order(mask.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        const std::size_t k = prune_count(policy.ratio, mask.size());
        for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 0;
      }
    } else {
      std::vector<std::pair<int, std::size_t>> order;
      for (int id : ids)
        for (std::size_t i = 0; i < masks.layers[id].size(); ++i)
          order.emplace_back(id, i);
      rng.shuffle(order);
      const std::size_t k = prune_count(policy.ratio, order.size());
      for (std::size_t i = 0; i < k; ++i)
        masks.layers[order[i].first][order[i].second] = 0;
    }
  } else {
    auto zero_block = [&](const BlockRef &b) {
      auto &mask = masks.layers[b.layer_id];
      for (std::size_t j = 0; j < b.length; ++j) mask[b.begin + j] = 0;
    };
    if (policy.distribution == Distribution::Uniform) {
      for (int id : ids) {
        std::vector<BlockRef> blocks =
            layer_blocks(id, model.layers()[static_cast<std::size_t>(id)].weight);
        rng.shuffle(blocks);
        const std::size_t k = prune_count(policy.ratio, blocks.size());
        for (std::size_t i = 0; i < k; ++i) zero_block(blocks[i]);
      }
    } else {
      std::vector<BlockRef> blocks;
      for (int id : ids) {
        auto lb =
            layer_blocks(id, model.layers()[static_cast<std::size_t>(id)].weight);
        blocks.insert(blocks.end(), lb.begin(), lb.end());
      }
      rng.shuffle(blocks);
      const std::size_t k = prune_count(policy.ratio, blocks.size());
      for (std::size_t i = 0; i < k; ++i) zero_block(blocks[i]);
    }
  }

  apply_mask(model, masks);
  return masks;
}

} // namespace gap
