#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gap/model.hpp"
#include "gap/tensor.hpp"

namespace gap {

// Activation record produced by forward(); consumed exactly once per
// backward(). Holds everything the reverse pass needs by value, plus the
// model revision so a cache taken before a parameter update is rejected.
struct ForwardCache {
  const Model *model = nullptr;
  std::uint64_t revision = 0;
  Tensor input;                      // [batch, in]
  std::vector<Tensor> pre_act;       // z_l per layer, [batch, out_l]
  std::vector<Tensor> layer_input;   // input to layer l (post-ReLU of l-1)
  Tensor output_grad_seed;           // dLoss/dLogits, [batch, out]
  double loss = 0.0;
};

// Mean loss over the batch plus the activation record.
// Throws ShapeError on batch/label mismatch, NumericError on non-finite
// activations, UsageError on out-of-range labels.
ForwardCache forward(const Model &model, const Tensor &batch_x,
                     std::span<const int> batch_y);

// Exact reverse-mode gradients of the loss w.r.t. every parameter array.
// Throws UsageError if the model changed since the cache was produced.
Gradients backward(const ForwardCache &cache);

// Central-difference gradient oracle: (f(θ+ε) − f(θ−ε)) / 2ε per scalar.
// Independent of backward(); used to cross-check it.
Gradients finite_diff_grad(Model &model, const Tensor &batch_x,
                           std::span<const int> batch_y, double epsilon);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean loss and argmax accuracy over a labeled set (no caching).
EvalResult evaluate(const Model &model, const Tensor &features,
                    std::span<const int> labels, std::size_t batch_size = 256);

} // namespace gap
