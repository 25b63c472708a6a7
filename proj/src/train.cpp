#include "gap/train.hpp"

#include <chrono>

#include "gap/autodiff.hpp"
#include "gap/rng.hpp"

namespace gap {

int train_phase(Model &model, const MaskSet &masks, SgdOptimizer &optimizer,
                const Dataset &data, const PhaseSpec &spec,
                RunRecord *record, const PhaseRowInfo &info,
                const std::function<void(MetricsRow &)> &annotate) {
  const int span = spec.schedule_span > 0 ? spec.schedule_span : spec.epochs;
  for (int e = 0; e < spec.epochs; ++e) {
    const auto started = std::chrono::steady_clock::now();
    const int epoch = spec.start_epoch + e;
    const double lr = lr_at(optimizer.config(), epoch, span);
    const std::uint64_t shuffle_seed =
        derive_seed(spec.master_seed,
                    {kStreamShuffle, static_cast<std::uint64_t>(spec.phase_index),
                     static_cast<std::uint64_t>(epoch)});

    double loss_sum = 0.0;
    std::size_t sample_count = 0;
    for (Batch &batch : make_batches(data, spec.batch_size, shuffle_seed)) {
      ForwardCache cache = forward(model, batch.x, batch.y);
      Gradients grads = backward(cache);
      optimizer.step(model, grads, masks, lr);
      loss_sum += cache.loss * static_cast<double>(batch.y.size());
      sample_count += batch.y.size();
    }

    if (record != nullptr) {
      MetricsRow row;
      row.run_id = record->run_id;
      row.method = record->method;
      row.step = info.step;
      row.round = info.round;
      row.epoch = info.epoch_offset + e;
      row.event = "epoch";
      row.lr = lr;
      if (sample_count > 0)
        row.train_loss = loss_sum / static_cast<double>(sample_count);
      if (data.val_count() > 0) {
        EvalResult val = evaluate(model, data.val_features(), data.val_labels());
        row.val_loss = val.loss;
        row.val_accuracy = val.accuracy;
      }
      annotate(row);
      row.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
              .count();
      record->add_row(std::move(row));
      ++record->epochs_consumed;
    }
  }
  return spec.epochs;
}

} // namespace gap
