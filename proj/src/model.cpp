#include "gap/model.hpp"

#include <cmath>

#include "gap/error.hpp"

namespace gap {

Model Model::mlp(const std::vector<std::size_t> &layer_sizes, Rng &rng,
                 LossKind loss) {
  if (layer_sizes.size() < 2)
    throw ConfigError("model needs at least an input and an output size");
  Model m;
  m.loss_ = loss;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    std::size_t in = layer_sizes[i];
    std::size_t out = layer_sizes[i + 1];
    if (in == 0 || out == 0) throw ConfigError("zero layer size");
    LinearLayer layer;
    layer.weight = Tensor({out, in});
    double bound = std::sqrt(6.0 / static_cast<double>(in));
    for (double &w : layer.weight.data)
      w = (2.0 * rng.next_double() - 1.0) * bound;
    layer.bias.assign(out, 0.0);
    m.layers_.push_back(std::move(layer));
  }
  return m;
}

Model Model::from_layers(std::vector<LinearLayer> layers, LossKind loss) {
  if (layers.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i].fan_out() != layers[i + 1].fan_in())
      throw ShapeError("adjacent layer dimensions incompatible");
  }
  for (const auto &layer : layers) {
    check_shape_consistent(layer.weight, "layer weight");
    if (layer.bias.size() != layer.fan_out())
      throw ShapeError("bias length != fan out");
  }
  Model m;
  m.loss_ = loss;
  m.layers_ = std::move(layers);
  return m;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto &layer : layers_) n += layer.weight.numel() + layer.bias.size();
  return n;
}

std::size_t Model::weight_count() const {
  std::size_t n = 0;
  for (const auto &layer : layers_) n += layer.weight.numel();
  return n;
}

Gradients Gradients::zeros_like(const Model &model) {
  Gradients g;
  g.layers.reserve(model.layer_count());
  for (const auto &layer : model.layers()) {
    LayerGrad lg;
    lg.weight = Tensor(layer.weight.shape);
    lg.bias.assign(layer.bias.size(), 0.0);
    g.layers.push_back(std::move(lg));
  }
  return g;
}

} // namespace gap
