#include "gap/gap_parallel.hpp"

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "gap/analysis.hpp"
#include "gap/error.hpp"
#include "gap/train.hpp"

namespace gap {

namespace {

constexpr char kWireMagic[4] = {'P', 'G', 'A', 'P'};
constexpr std::uint8_t kMsgDistribute = 1;
constexpr std::uint8_t kMsgResult = 2;
constexpr std::uint8_t kMsgShutdown = 3;

template <typename T>
void append_le(std::vector<std::uint8_t> &out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const std::vector<std::uint8_t> &in, std::size_t &offset) {
  if (offset + sizeof(T) > in.size())
    throw ProtocolError("truncated worker message");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(in[offset + i]) << (8 * i);
  offset += sizeof(T);
  return value;
}

// Single-producer-single-consumer byte-message queue.
class MessageQueue {
public:
  void push(std::vector<std::uint8_t> bytes) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(bytes));
    }
    ready_.notify_one();
  }

  // Blocks; empty result means the timeout elapsed. timeout_ms < 0 waits
  // forever.
  std::optional<std::vector<std::uint8_t>> pop(int timeout_ms) {
    std::unique_lock lock(mutex_);
    auto nonempty = [&] { return !queue_.empty(); };
    if (timeout_ms < 0) {
      ready_.wait(lock, nonempty);
    } else {
      // system_clock deadline: keeps the wait on pthread_cond_timedwait,
      // which thread sanitizers model (the steady-clock overload may use
      // pthread_cond_clockwait, which they do not).
      const auto deadline =
          std::chrono::system_clock::now() + std::chrono::milliseconds(timeout_ms);
      if (!ready_.wait_until(lock, deadline, nonempty)) return std::nullopt;
    }
    std::vector<std::uint8_t> bytes = std::move(queue_.front());
    queue_.pop_front();
    return bytes;
  }

private:
  std::mutex mutex_;
  std::condition_variable ready_;
  std::deque<std::vector<std::uint8_t>> queue_;
};

} // namespace

std::vector<std::uint8_t> encode_message(const WorkerMessage &msg) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kWireMagic, kWireMagic + sizeof(kWireMagic));
  append_le(out, kWireVersion);
  if (const auto *d = std::get_if<DistributeMsg>(&msg)) {
    out.push_back(kMsgDistribute);
    append_le(out, d->step);
    append_le(out, d->shuffle_seed);
    append_le(out, d->partition);
    append_tensor_block(out, d->tensors);
    append_mask_block(out, d->masks);
  } else if (const auto *r = std::get_if<ResultMsg>(&msg)) {
    out.push_back(kMsgResult);
    append_le(out, r->step);
    append_le(out, r->partition);
    append_tensor_block(out, r->tensors);
  } else {
    out.push_back(kMsgShutdown);
  }
  return out;
}

WorkerMessage decode_message(const std::vector<std::uint8_t> &bytes) {
  std::size_t offset = 0;
  if (bytes.size() < sizeof(kWireMagic) ||
      std::memcmp(bytes.data(), kWireMagic, sizeof(kWireMagic)) != 0)
    throw ProtocolError("bad message magic");
  offset += sizeof(kWireMagic);
  const auto version = read_le<std::uint16_t>(bytes, offset);
  if (version != kWireVersion) throw ProtocolError("unsupported wire version");
  if (offset >= bytes.size()) throw ProtocolError("truncated worker message");
  const std::uint8_t type = bytes[offset++];

  try {
    if (type == kMsgDistribute) {
      DistributeMsg d;
      d.step = read_le<std::uint32_t>(bytes, offset);
      d.shuffle_seed = read_le<std::uint64_t>(bytes, offset);
      d.partition = read_le<std::uint16_t>(bytes, offset);
      d.tensors = read_tensor_block(bytes, offset);
      d.masks = read_mask_block(bytes, offset);
      return d;
    }
    if (type == kMsgResult) {
      ResultMsg r;
      r.step = read_le<std::uint32_t>(bytes, offset);
      r.partition = read_le<std::uint16_t>(bytes, offset);
      r.tensors = read_tensor_block(bytes, offset);
      return r;
    }
  } catch (const FormatError &e) {
    throw ProtocolError(std::string("malformed payload: ") + e.what());
  }
  if (type == kMsgShutdown) return ShutdownMsg{};
  throw ProtocolError("unknown message type");
}

void combine_results(Model &base, const PartitionScheme &scheme,
                     const std::map<int, std::vector<NamedTensor>> &results) {
  if (static_cast<int>(results.size()) != scheme.group_count)
    throw ProtocolError("combine needs exactly one result per partition");

  for (const auto &[partition, tensors] : results) {
    if (partition < 0 || partition >= scheme.group_count)
      throw ProtocolError("result for unknown partition");
    const std::vector<int> &group =
        scheme.groups[static_cast<std::size_t>(partition)];
    const std::vector<NamedTensor> expected = partition_tensors(base, group);
    if (expected.size() != tensors.size())
      throw ProtocolError("result tensor count mismatch");
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      if (tensors[t].name != expected[t].name ||
          tensors[t].tensor.shape != expected[t].tensor.shape)
        throw ProtocolError("result tensor name/shape mismatch: " +
                            tensors[t].name);
    }
    // The owner worker supplies both the weights and the biases of its
    // group's layers.
    auto &layers = base.mutable_layers();
    for (std::size_t g = 0; g < group.size(); ++g) {
      const auto id = static_cast<std::size_t>(group[g]);
      layers[id].weight = tensors[2 * g].tensor;
      layers[id].bias = tensors[2 * g + 1].tensor.data;
    }
  }
}

namespace {

struct WorkerSlot {
  MessageQueue inbox;
  RunRecord record; // filled only for worker 0
  int result_delay_ms = 0;
  std::mutex error_mutex;
  std::string error;
};

} // namespace

RunOutput run_pgap(const GapConfig &config, Model &model, const Dataset &data,
                   const std::string &run_id,
                   const std::vector<int> &result_delays_ms) {
  validate_policy(config.policy);
  validate_optimizer(config.optimizer);
  if (config.partitions < 1) throw ConfigError("partition count must be >= 1");
  if (config.batch_size == 0) throw ConfigError("batch size must be positive");

  const int kappa = config.partitions;
  const int total_steps = config.steps;

  RunOutput out;
  out.record.run_id = run_id;
  out.record.method = "pgap";

  MaskSet &masks = out.masks;
  masks = init_sparse(model, config.policy,
                      derive_seed(config.seed, {kStreamInitMask}));
  CoverageTracker tracker(masks);

  const PartitionScheme scheme =
      config.strategy == PartitionStrategy::Contiguous
          ? make_contiguous_partitions(model, config.policy, kappa)
          : make_random_partition(model, config.policy, kappa,
                                  derive_seed(config.seed, {kStreamPartition, 0}));

  const std::vector<Batch> probes =
      probe_batches(data, config.probe_samples, config.batch_size,
                    derive_seed(config.seed, {kStreamProbe}));

  auto annotate = [&](MetricsRow &row) {
    row.global_sparsity = sparsity_of(masks);
    std::string per_group;
    for (std::size_t g = 0; g < scheme.groups.size(); ++g) {
      if (g > 0) per_group += ';';
      per_group += format_double(sparsity_of(masks, scheme.groups[g]));
    }
    row.per_partition_sparsity = per_group;
    row.coverage = tracker.fraction();
    row.flops = flops_estimate(model, masks);
  };

  auto event_row = [&](int step, const char *kind, std::optional<int> partition,
                       std::optional<double> delta_sq) {
    MetricsRow row;
    row.run_id = run_id;
    row.method = out.record.method;
    row.step = step;
    row.round = step; // one round per step
    row.epoch = out.record.epochs_consumed;
    row.event = kind;
    row.partition = partition;
    row.delta_sq = delta_sq;
    annotate(row);
    out.record.add_row(std::move(row));
  };

  // Workers live for the whole run; each exclusively owns its replica.
  std::vector<WorkerSlot> slots(static_cast<std::size_t>(kappa));
  for (std::size_t i = 0; i < slots.size(); ++i)
    slots[i].result_delay_ms =
        i < result_delays_ms.size() ? result_delays_ms[i] : 0;
  MessageQueue coordinator_inbox;

  const LossKind loss_kind = model.loss_kind();
  auto worker_main = [&](int worker_id) {
    WorkerSlot &slot = slots[static_cast<std::size_t>(worker_id)];
    while (true) {
      auto bytes = slot.inbox.pop(-1);
      WorkerMessage msg = decode_message(*bytes);
      if (std::holds_alternative<ShutdownMsg>(msg)) break;
      try {
        const auto &dist = std::get<DistributeMsg>(msg);

        Model replica = model_from_tensors(dist.tensors, loss_kind);
        MaskSet replica_masks = dist.masks;
        const std::vector<int> &group =
            scheme.groups[static_cast<std::size_t>(dist.partition)];
        arg_grow_to(replica_masks, group);

        SgdOptimizer optimizer(config.optimizer, replica);
        RunRecord *record = worker_id == 0 ? &slot.record : nullptr;
        PhaseSpec phase{0, 0, config.epochs_per_step, 0, config.batch_size,
                        dist.shuffle_seed};
        const int epoch_offset =
            static_cast<int>(dist.step) * config.epochs_per_step;
        std::function<void(MetricsRow &)> worker_annotate =
            [&](MetricsRow &row) {
              row.global_sparsity = sparsity_of(replica_masks);
              row.coverage = 1.0; // the grown replica explores its whole group
              row.flops = flops_estimate(replica, replica_masks);
            };
        train_phase(replica, replica_masks, optimizer, data, phase, record,
                    {static_cast<int>(dist.step), static_cast<int>(dist.step),
                     epoch_offset},
                    worker_annotate);

        ResultMsg result;
        result.step = dist.step;
        result.partition = dist.partition;
        result.tensors = partition_tensors(replica, group);
        if (slot.result_delay_ms > 0)
          std::this_thread::sleep_for(
              std::chrono::milliseconds(slot.result_delay_ms));
        coordinator_inbox.push(encode_message(result));
      } catch (const std::exception &e) {
        {
          std::lock_guard lock(slot.error_mutex);
          slot.error = e.what();
        }
        coordinator_inbox.push(encode_message(ShutdownMsg{}));
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(kappa));
  for (int i = 0; i < kappa; ++i) threads.emplace_back(worker_main, i);

  auto shutdown_workers = [&]() {
    for (auto &slot : slots) slot.inbox.push(encode_message(ShutdownMsg{}));
    for (auto &t : threads)
      if (t.joinable()) t.join();
  };

  try {
    const std::vector<int> all_prunable = prunable_layers(model, config.policy);
    for (int step = 0; step < total_steps; ++step) {
      out.convergence.grad_norms.push_back(
          probe_gradient_norm(model, masks, probes));

      int distributes = 0;
      int results = 0;
      for (int i = 0; i < kappa; ++i) {
        DistributeMsg dist;
        dist.step = static_cast<std::uint32_t>(step);
        dist.shuffle_seed = derive_seed(
            config.seed, {kStreamWorker, static_cast<std::uint64_t>(step),
                          static_cast<std::uint64_t>(i)});
        dist.partition = static_cast<std::uint16_t>(i);
        dist.tensors = model_tensors(model);
        dist.masks = masks;
        slots[static_cast<std::size_t>(i)].inbox.push(
            encode_message(WorkerMessage(std::move(dist))));
        ++distributes;

        // Coverage: worker i explores its whole group this step.
        MaskSet grown = masks;
        arg_grow_to(grown, scheme.groups[static_cast<std::size_t>(i)]);
        tracker.track(grown);
        event_row(step, "grow", i, std::nullopt);
      }

      std::map<int, std::vector<NamedTensor>> collected;
      std::set<int> expected;
      for (int i = 0; i < kappa; ++i) expected.insert(i);
      while (!expected.empty()) {
        auto bytes = coordinator_inbox.pop(config.worker_timeout_ms);
        if (!bytes)
          throw ProtocolError("step " + std::to_string(step) +
                              ": worker result missing after timeout");
        WorkerMessage msg = decode_message(*bytes);
        const auto *result = std::get_if<ResultMsg>(&msg);
        if (result == nullptr) {
          for (auto &slot : slots) {
            std::lock_guard lock(slot.error_mutex);
            if (!slot.error.empty())
              throw ProtocolError("worker failed: " + slot.error);
          }
          throw ProtocolError("unexpected message while collecting results");
        }
        if (result->step != static_cast<std::uint32_t>(step))
          throw ProtocolError("result for wrong step");
        const int partition = result->partition;
        if (!expected.erase(partition))
          throw ProtocolError("duplicate result for partition " +
                              std::to_string(partition));
        collected[partition] = result->tensors;
        ++results;
      }

      combine_results(model, scheme, collected);
      arg_grow_to(masks, all_prunable); // dense before the global prune
      tracker.track(masks);

      PruneResult pruned = arg_prune_to(model, config.policy, all_prunable);
      masks = pruned.fragment;
      tracker.track(masks);
      if (pruned.mask_error)
        out.convergence.mask_errors.push_back(*pruned.mask_error);
      else
        out.convergence.mask_errors.push_back(0.0);

      // Worker 0's epoch rows stand in for the step's training metrics.
      RunRecord &w0 = slots[0].record;
      for (MetricsRow &row : w0.rows) {
        row.run_id = run_id;
        row.method = out.record.method;
        out.record.add_row(row);
        ++out.record.epochs_consumed;
      }
      w0.rows.clear();

      event_row(step, "prune", std::nullopt, pruned.mask_error);
      out.mask_events.push_back({step, "prune", masks});
      out.record.message_counts.emplace_back(distributes, results);
    }
  } catch (...) {
    shutdown_workers();
    throw;
  }
  shutdown_workers();
  out.convergence.rounds = static_cast<int>(out.convergence.grad_norms.size());

  if (config.finetune_epochs > 0) {
    SgdOptimizer optimizer(config.optimizer, model);
    PhaseSpec phase{total_steps, 0, config.finetune_epochs, 0,
                    config.batch_size, config.seed};
    train_phase(model, masks, optimizer, data, phase, &out.record,
                {total_steps, total_steps,
                 total_steps * config.epochs_per_step},
                annotate);
  }

  for (const MetricsRow &row : out.record.rows) {
    if (row.event != "epoch" || row.step >= total_steps) continue;
    if (row.val_accuracy && *row.val_accuracy > out.record.best_val_accuracy) {
      out.record.best_val_accuracy = *row.val_accuracy;
      out.record.best_step = row.step;
    }
  }
  return out;
}

} // namespace gap
