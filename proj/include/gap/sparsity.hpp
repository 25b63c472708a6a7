#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "gap/model.hpp"

namespace gap {

// Per-layer binary masks over prunable weight arrays. Layer ids index the
// model's Linear layers; bias arrays never appear here. Entry 1 = trainable,
// 0 = frozen at zero.
struct MaskSet {
  std::map<int, std::vector<std::uint8_t>> layers;

  bool has(int layer_id) const { return layers.count(layer_id) != 0; }
  std::size_t zero_count() const;
  std::size_t entry_count() const;

  // Overwrites entries for layers present in the fragment.
  void merge(const MaskSet &fragment);

  // All-ones masks for every prunable (non-exempt) layer of the model.
  static MaskSet dense_like(const Model &model, const std::set<int> &exempt = {});
};

enum class Distribution { Uniform, NonUniform };
enum class Granularity { Element, Block };

inline constexpr std::size_t kBlockWidth = 8;

struct SparsityPolicy {
  double ratio = 0.0;
  Distribution distribution = Distribution::Uniform;
  Granularity granularity = Granularity::Element;
  std::set<int> exempt_layers;
};

// Throws ConfigError when the policy is malformed (ratio outside [0,1)).
void validate_policy(const SparsityPolicy &policy);

// Prunable layer ids of a model under a policy: every Linear weight matrix
// not exempted. Biases are never prunable.
std::vector<int> prunable_layers(const Model &model,
                                 const SparsityPolicy &policy);

struct PruneResult {
  MaskSet fragment;
  // δ̂² of the new masks over the scoped weights, measured before zeroing;
  // empty when the scoped weights are all zero (no signal).
  std::optional<double> mask_error;
};

// Magnitude pruning: zeroes the lowest-|w| entries (or 1x8 blocks) within the
// scoped layers until each scope meets the policy ratio, and returns the mask
// fragment. Uniform prunes each layer separately; non-uniform sorts all
// scoped weights together. k = round(r*n), ties broken by ascending flat
// index. Kept weights are untouched.
PruneResult arg_prune_to(Model &model, const SparsityPolicy &policy,
                         std::span<const int> scope);

// Sets every mask entry of the given layers to 1. Weights are untouched;
// previously pruned weights stay zero-valued until training updates them.
void arg_grow_to(MaskSet &masks, std::span<const int> layers);

// Θ ⊙ m. Kept entries are bit-identical.
void apply_mask(Model &model, const MaskSet &masks);
void apply_mask(std::span<double> weights, std::span<const std::uint8_t> mask);

// zeros / total over the scoped masks. Layers without a mask contribute
// nothing (they are dense by construction).
double sparsity_of(const MaskSet &masks);
double sparsity_of(const MaskSet &masks, std::span<const int> scope);

// δ̂² = ||Θ − Θ⊙m||² / ||Θ||²; empty when ||Θ||² == 0.
std::optional<double> mask_relative_error(std::span<const double> weights,
                                          std::span<const std::uint8_t> mask);
std::optional<double> mask_relative_error(const Model &model,
                                          const MaskSet &masks,
                                          std::span<const int> scope);

// Per-sample forward cost: 2*in*out + out for a dense Linear layer
// (multiply and add counted separately), with the weight term scaled by the
// layer's kept fraction. Biases always count dense.
std::int64_t flops_estimate(const Model &model, const MaskSet &masks);

// Random masks meeting the exact target counts: per layer for uniform,
// global for non-uniform. Pruned weights are zeroed. Mask of every prunable
// layer is present in the result (all-ones when r = 0).
MaskSet init_sparse(Model &model, const SparsityPolicy &policy,
                    std::uint64_t seed);

} // namespace gap
