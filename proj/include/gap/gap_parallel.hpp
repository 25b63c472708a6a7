#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "gap/checkpoint.hpp"
#include "gap/dataset.hpp"
#include "gap/gap_cyclic.hpp"
#include "gap/partition.hpp"

namespace gap {

// Wire protocol. Header: magic "PGAP", version u16, message type u8; all
// integers little-endian. Distribute carries the full weights and masks as
// checkpoint-format tensor/mask blocks; Result carries only the dense
// partition's tensors.
inline constexpr std::uint16_t kWireVersion = 1;

struct DistributeMsg {
  std::uint32_t step = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint16_t partition = 0; // group the receiving worker grows
  std::vector<NamedTensor> tensors;
  MaskSet masks;
};

struct ResultMsg {
  std::uint32_t step = 0;
  std::uint16_t partition = 0;
  std::vector<NamedTensor> tensors;
};

struct ShutdownMsg {};

using WorkerMessage = std::variant<DistributeMsg, ResultMsg, ShutdownMsg>;

std::vector<std::uint8_t> encode_message(const WorkerMessage &msg);
WorkerMessage decode_message(const std::vector<std::uint8_t> &bytes);

// Writes each partition's Result tensors into the base model; the output is
// a pure function of {partition id -> tensors}, independent of insertion
// order. Throws ProtocolError on duplicate/missing partitions or shape
// mismatches.
void combine_results(Model &base, const PartitionScheme &scheme,
                     const std::map<int, std::vector<NamedTensor>> &results);

// Parallel grow-and-prune: every step broadcasts identical weights and masks
// to one worker per partition; each worker grows its own group, trains, and
// returns the dense group; the coordinator combines the groups into a dense
// model and prunes it globally. Communication happens only at step
// boundaries. result_delays_ms staggers worker replies (determinism checks).
RunOutput run_pgap(const GapConfig &config, Model &model, const Dataset &data,
                   const std::string &run_id = "pgap",
                   const std::vector<int> &result_delays_ms = {});

} // namespace gap
