#pragma once

#include <cstdint>
#include <vector>

#include "gap/rng.hpp"
#include "gap/tensor.hpp"

namespace gap {

// One fully connected layer. weight has shape [out, in]; bias is always
// dense and never masked.
struct LinearLayer {
  Tensor weight;
  std::vector<double> bias;

  std::size_t fan_in() const { return weight.cols(); }
  std::size_t fan_out() const { return weight.rows(); }
};

// SquaredError exists for tests and regression-style diagnostics; training
// runs use softmax cross-entropy.
enum class LossKind { SoftmaxCrossEntropy, SquaredError };

// Feed-forward classifier: Linear layers with ReLU between them (none after
// the last), topped by the loss head. Single-owner; not safe for concurrent
// mutation, but movable across threads.
class Model {
public:
  Model() = default;

  // Kaiming-uniform fan-in init for weights, zero biases.
  static Model mlp(const std::vector<std::size_t> &layer_sizes, Rng &rng,
                   LossKind loss = LossKind::SoftmaxCrossEntropy);

  // Builds a model around existing layers (checkpoint load, tests).
  static Model from_layers(std::vector<LinearLayer> layers,
                           LossKind loss = LossKind::SoftmaxCrossEntropy);

  const std::vector<LinearLayer> &layers() const { return layers_; }
  // Mutable access bumps the revision stamp so stale forward caches are
  // detectable in backward().
  std::vector<LinearLayer> &mutable_layers() {
    ++revision_;
    return layers_;
  }

  LossKind loss_kind() const { return loss_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::size_t input_dim() const { return layers_.front().fan_in(); }
  std::size_t output_dim() const { return layers_.back().fan_out(); }
  std::uint64_t revision() const { return revision_; }

  std::size_t parameter_count() const;
  std::size_t weight_count() const; // excludes biases

private:
  std::vector<LinearLayer> layers_;
  LossKind loss_ = LossKind::SoftmaxCrossEntropy;
  std::uint64_t revision_ = 0;
};

// Gradient arrays, shape-congruent with a Model's parameters.
struct LayerGrad {
  Tensor weight;
  std::vector<double> bias;
};

struct Gradients {
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const Model &model);
};

} // namespace gap
