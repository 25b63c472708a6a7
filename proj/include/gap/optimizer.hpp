#pragma once

#include <vector>

#include "gap/model.hpp"
#include "gap/sparsity.hpp"

namespace gap {

enum class LrSchedule { Constant, CosineWarmup };

struct OptimizerConfig {
  double learning_rate = 0.1; // > 0
  double momentum = 0.0;      // in [0, 1)
  double weight_decay = 0.0;  // >= 0
  LrSchedule schedule = LrSchedule::Constant;
  int warmup_epochs = 0;
};

void validate_optimizer(const OptimizerConfig &opt);

// Learning rate for one epoch of a schedule spanning total_epochs: linear
// ramp over the warmup epochs, then cosine decay; the constant schedule
// always returns the base rate.
double lr_at(const OptimizerConfig &opt, int epoch, int total_epochs);

// SGD with momentum and weight decay under masks. Masked-out entries have
// weight, momentum buffer, and effective update pinned to exactly zero at
// every step. Weight decay applies only to kept weight entries, never to
// biases. Layers without a mask are treated as dense.
class SgdOptimizer {
public:
  SgdOptimizer(OptimizerConfig config, const Model &model);

  void step(Model &model, const Gradients &grads, const MaskSet &masks,
            double lr_now);

  // Momentum buffers back to zero (used at grow/prune events).
  void reset_momentum();

  const OptimizerConfig &config() const { return config_; }

private:
  OptimizerConfig config_;
  Gradients velocity_;
};

} // namespace gap
