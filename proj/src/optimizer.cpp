#include "gap/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "gap/error.hpp"

namespace gap {

void validate_optimizer(const OptimizerConfig &opt) {
  if (!(opt.learning_rate > 0.0))
    throw ConfigError("learning rate must be positive");
  if (opt.momentum < 0.0 || opt.momentum >= 1.0)
    throw ConfigError("momentum must lie in [0, 1)");
  if (opt.weight_decay < 0.0)
    throw ConfigError("weight decay must be nonnegative");
  if (opt.warmup_epochs < 0)
    throw ConfigError("warmup epochs must be nonnegative");
}

double lr_at(const OptimizerConfig &opt, int epoch, int total_epochs) {
  if (total_epochs <= 0) throw UsageError("total_epochs must be positive");
  if (epoch < 0 || epoch >= total_epochs)
    throw UsageError("epoch outside [0, total_epochs)");
  if (opt.schedule == LrSchedule::Constant) return opt.learning_rate;

  const int warmup = std::min(opt.warmup_epochs, total_epochs);
  if (epoch < warmup)
    return opt.learning_rate * static_cast<double>(epoch + 1) /
           static_cast<double>(warmup);
  if (total_epochs == warmup) return opt.learning_rate;
  const double progress = static_cast<double>(epoch - warmup) /
                          static_cast<double>(total_epochs - warmup);
  return opt.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

SgdOptimizer::SgdOptimizer(OptimizerConfig config, const Model &model)
    : config_(config), velocity_(Gradients::zeros_like(model)) {
  validate_optimizer(config_);
}

void SgdOptimizer::step(Model &model, const Gradients &grads,
                        const MaskSet &masks, double lr_now) {
  if (!(lr_now > 0.0)) throw UsageError("lr_now must be positive");
  if (grads.layers.size() != model.layer_count() ||
      velocity_.layers.size() != model.layer_count())
    throw UsageError("gradient/model layer count mismatch");

  auto &layers = model.mutable_layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    LinearLayer &layer = layers[li];
    const LayerGrad &g = grads.layers[li];
    LayerGrad &v = velocity_.layers[li];
    if (!g.weight.same_shape(layer.weight) ||
        g.bias.size() != layer.bias.size())
      throw UsageError("gradient shape mismatch");

    const std::vector<std::uint8_t> *mask = nullptr;
    auto it = masks.layers.find(static_cast<int>(li));
    if (it != masks.layers.end()) {
      if (it->second.size() != layer.weight.numel())
        throw UsageError("mask shape mismatch");
      mask = &it->second;
    }

    for (std::size_t i = 0; i < layer.weight.numel(); ++i) {
      if (mask && (*mask)[i] == 0) {
        layer.weight.data[i] = 0.0;
        v.weight.data[i] = 0.0;
        continue;
      }
      double grad = g.weight.data[i] + config_.weight_decay * layer.weight.data[i];
      v.weight.data[i] = config_.momentum * v.weight.data[i] + grad;
      layer.weight.data[i] -= lr_now * v.weight.data[i];
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      v.bias[i] = config_.momentum * v.bias[i] + g.bias[i];
      layer.bias[i] -= lr_now * v.bias[i];
    }
    check_finite(layer.weight, "updated weights");
    check_finite(layer.bias, "updated biases");
  }
}

void SgdOptimizer::reset_momentum() {
  for (auto &layer : velocity_.layers) {
    std::fill(layer.weight.data.begin(), layer.weight.data.end(), 0.0);
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
  }
}

} // namespace gap
