#include "gap/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gap/error.hpp"

namespace gap {

namespace {

// y = x * W^T + b, x [B, in], W [out, in], y [B, out].
void linear_forward(const Tensor &x, const LinearLayer &layer, Tensor &y) {
  const std::size_t batch = x.rows();
  const std::size_t in = layer.fan_in();
  const std::size_t out = layer.fan_out();
  if (x.cols() != in) throw ShapeError("linear input width mismatch");
  y = Tensor({batch, out});
  for (std::size_t b = 0; b < batch; ++b) {
    const double *xb = &x.data[b * in];
    double *yb = &y.data[b * out];
    for (std::size_t o = 0; o < out; ++o) yb[o] = layer.bias[o];
    for (std::size_t o = 0; o < out; ++o) {
      const double *w = &layer.weight.data[o * in];
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += w[k] * xb[k];
      yb[o] += acc;
    }
  }
}

double softmax_xent(const Tensor &logits, std::span<const int> labels,
                    Tensor &grad_seed) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  grad_seed = Tensor({batch, classes});
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double *row = &logits.data[b * classes];
    double *g = &grad_seed.data[b * classes];
    double maxv = row[0];
    for (std::size_t c = 1; c < classes; ++c) maxv = std::max(maxv, row[c]);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - maxv);
    const int y = labels[b];
    total += -(row[static_cast<std::size_t>(y)] - maxv - std::log(denom));
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t c = 0; c < classes; ++c) {
      double p = std::exp(row[c] - maxv) / denom;
      g[c] = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_batch;
    }
  }
  return total / static_cast<double>(batch);
}

// Targets: one-hot for multi-output heads, the raw label value for a
// single-output regression head.
double squared_error(const Tensor &logits, std::span<const int> labels,
                     Tensor &grad_seed) {
  const std::size_t batch = logits.rows();
  const std::size_t outs = logits.cols();
  grad_seed = Tensor({batch, outs});
  double total = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double *row = &logits.data[b * outs];
    double *g = &grad_seed.data[b * outs];
    for (std::size_t o = 0; o < outs; ++o) {
      double target;
      if (outs == 1)
        target = static_cast<double>(labels[b]);
      else
        target = (static_cast<int>(o) == labels[b]) ? 1.0 : 0.0;
      double diff = row[o] - target;
      total += diff * diff;
      g[o] = 2.0 * diff * inv_batch;
    }
  }
  return total * inv_batch;
}

void check_batch(const Model &model, const Tensor &batch_x,
                 std::span<const int> batch_y) {
  check_shape_consistent(batch_x, "batch");
  if (batch_x.shape.size() != 2) throw ShapeError("batch must be 2-D");
  if (batch_x.rows() != batch_y.size())
    throw ShapeError("batch row count != label count");
  if (batch_x.cols() != model.input_dim())
    throw ShapeError("batch width != model input dim");
  const int classes = static_cast<int>(model.output_dim());
  for (int y : batch_y) {
    if (y < 0) throw UsageError("negative label");
    if (model.loss_kind() == LossKind::SoftmaxCrossEntropy && y >= classes)
      throw UsageError("label out of class range");
  }
}

} // namespace

ForwardCache forward(const Model &model, const Tensor &batch_x,
                     std::span<const int> batch_y) {
  check_batch(model, batch_x, batch_y);
  ForwardCache cache;
  cache.model = &model;
  cache.revision = model.revision();
  cache.input = batch_x;

  const std::size_t n_layers = model.layer_count();
  cache.pre_act.resize(n_layers);
  cache.layer_input.resize(n_layers);

  Tensor current = batch_x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    cache.layer_input[l] = current;
    linear_forward(current, model.layers()[l], cache.pre_act[l]);
    check_finite(cache.pre_act[l], "activation");
    if (l + 1 < n_layers) {
      current = cache.pre_act[l];
      for (double &v : current.data) v = v > 0.0 ? v : 0.0;
    }
  }

  const Tensor &logits = cache.pre_act.back();
  if (model.loss_kind() == LossKind::SoftmaxCrossEntropy)
    cache.loss = softmax_xent(logits, batch_y, cache.output_grad_seed);
  else
    cache.loss = squared_error(logits, batch_y, cache.output_grad_seed);
  if (!std::isfinite(cache.loss)) throw NumericError("non-finite loss");
  return cache;
}

Gradients backward(const ForwardCache &cache) {
  if (cache.model == nullptr) throw UsageError("backward on empty cache");
  const Model &model = *cache.model;
  if (cache.revision != model.revision())
    throw UsageError("stale forward cache: model changed since forward");

  Gradients grads = Gradients::zeros_like(model);
  const std::size_t n_layers = model.layer_count();

  Tensor delta = cache.output_grad_seed; // dLoss/dZ for the current layer
  for (std::size_t li = n_layers; li-- > 0;) {
    const LinearLayer &layer = model.layers()[li];
    const Tensor &x = cache.layer_input[li];
    const std::size_t batch = x.rows();
    const std::size_t in = layer.fan_in();
    const std::size_t out = layer.fan_out();

    LayerGrad &lg = grads.layers[li];
    for (std::size_t b = 0; b < batch; ++b) {
      const double *db = &delta.data[b * out];
      const double *xb = &x.data[b * in];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = db[o];
        if (d == 0.0) continue;
        double *gw = &lg.weight.data[o * in];
        for (std::size_t k = 0; k < in; ++k) gw[k] += d * xb[k];
        lg.bias[o] += d;
      }
    }

    if (li == 0) break;
    // Propagate to the previous layer's output, through its ReLU.
    Tensor prev({batch, in});
    for (std::size_t b = 0; b < batch; ++b) {
      const double *db = &delta.data[b * out];
      double *pb = &prev.data[b * in];
      for (std::size_t o = 0; o < out; ++o) {
        const double d = db[o];
        if (d == 0.0) continue;
        const double *w = &layer.weight.data[o * in];
        for (std::size_t k = 0; k < in; ++k) pb[k] += d * w[k];
      }
    }
    const Tensor &z_prev = cache.pre_act[li - 1];
    for (std::size_t i = 0; i < prev.data.size(); ++i)
      if (z_prev.data[i] <= 0.0) prev.data[i] = 0.0;
    delta = std::move(prev);
  }
  return grads;
}

Gradients finite_diff_grad(Model &model, const Tensor &batch_x,
                           std::span<const int> batch_y, double epsilon) {
  if (epsilon <= 0.0) throw UsageError("epsilon must be positive");
  Gradients grads = Gradients::zeros_like(model);
  auto eval = [&]() { return forward(model, batch_x, batch_y).loss; };

  for (std::size_t li = 0; li < model.layer_count(); ++li) {
    auto perturb = [&](std::vector<double> &params, std::vector<double> &out) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + epsilon;
        const double up = eval();
        params[i] = saved - epsilon;
        const double down = eval();
        params[i] = saved;
        out[i] = (up - down) / (2.0 * epsilon);
      }
    };
    perturb(model.mutable_layers()[li].weight.data,
            grads.layers[li].weight.data);
    perturb(model.mutable_layers()[li].bias, grads.layers[li].bias);
  }
  return grads;
}

EvalResult evaluate(const Model &model, const Tensor &features,
                    std::span<const int> labels, std::size_t batch_size) {
  const std::size_t n = features.rows();
  if (n == 0) return {};
  const std::size_t dim = features.cols();
  EvalResult result;
  std::size_t correct = 0;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Tensor x({count, dim});
    std::copy_n(&features.data[start * dim], count * dim, x.data.begin());
    std::vector<int> y(labels.begin() + static_cast<std::ptrdiff_t>(start),
                       labels.begin() + static_cast<std::ptrdiff_t>(start + count));
    ForwardCache cache = forward(model, x, y);
    loss_sum += cache.loss * static_cast<double>(count);
    const Tensor &logits = cache.pre_act.back();
    for (std::size_t b = 0; b < count; ++b) {
      const double *row = &logits.data[b * logits.cols()];
      std::size_t best = 0;
      for (std::size_t c = 1; c < logits.cols(); ++c)
        if (row[c] > row[best]) best = c;
      if (static_cast<int>(best) == y[b]) ++correct;
    }
  }
  result.loss = loss_sum / static_cast<double>(n);
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return result;
}

} // namespace gap
