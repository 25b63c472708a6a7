#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gap/model.hpp"
#include "gap/sparsity.hpp"

namespace gap {

// Named tensor for serialization ("layers.<i>.weight" / "layers.<i>.bias").
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Binary blocks shared by the checkpoint file and the worker wire format.
// All integers little-endian.
//
// tensor block: u32 count, then per tensor: u16 name length, name bytes,
//   u8 rank, u32 dims, u8 dtype code (1 = f64), raw f64 data.
// mask block: u32 count, then per mask: u16 name length, name bytes,
//   u64 bit count, packed bits LSB-first within each byte.
void append_tensor_block(std::vector<std::uint8_t> &out,
                         const std::vector<NamedTensor> &tensors);
void append_mask_block(std::vector<std::uint8_t> &out, const MaskSet &masks);

std::vector<NamedTensor> read_tensor_block(const std::vector<std::uint8_t> &in,
                                           std::size_t &offset);
MaskSet read_mask_block(const std::vector<std::uint8_t> &in,
                        std::size_t &offset);

std::vector<std::uint8_t> pack_mask_bits(const std::vector<std::uint8_t> &mask);
std::vector<std::uint8_t> unpack_mask_bits(const std::vector<std::uint8_t> &bytes,
                                           std::size_t bit_count);

// Model parameters as named tensors in layer order.
std::vector<NamedTensor> model_tensors(const Model &model);
std::vector<NamedTensor> partition_tensors(const Model &model,
                                           const std::vector<int> &layer_ids);
Model model_from_tensors(const std::vector<NamedTensor> &tensors,
                         LossKind loss = LossKind::SoftmaxCrossEntropy);

// Checkpoint file: magic "GAPCKPT1", then a tensor block, then a mask block.
// Round-trips bit-exactly. Throws FormatError on bad magic or truncation.
void save_checkpoint(const Model &model, const MaskSet &masks,
                     const std::string &path);

struct Checkpoint {
  Model model;
  MaskSet masks;
};

Checkpoint load_checkpoint(const std::string &path);

} // namespace gap
