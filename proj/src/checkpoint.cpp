#include "gap/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "gap/error.hpp"

namespace gap {

namespace {

constexpr char kMagic[8] = {'G', 'A', 'P', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void append_le(std::vector<std::uint8_t> &out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xff));
}

template <typename T>
T read_le(const std::vector<std::uint8_t> &in, std::size_t &offset) {
  if (offset + sizeof(T) > in.size()) throw FormatError("truncated block");
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    value |= static_cast<T>(in[offset + i]) << (8 * i);
  offset += sizeof(T);
  return value;
}

void append_f64(std::vector<std::uint8_t> &out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  append_le(out, bits);
}

double read_f64(const std::vector<std::uint8_t> &in, std::size_t &offset) {
  std::uint64_t bits = read_le<std::uint64_t>(in, offset);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

void append_name(std::vector<std::uint8_t> &out, const std::string &name) {
  if (name.size() > 0xffff) throw FormatError("tensor name too long");
  append_le(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
}

std::string read_name(const std::vector<std::uint8_t> &in, std::size_t &offset) {
  const std::uint16_t len = read_le<std::uint16_t>(in, offset);
  if (offset + len > in.size()) throw FormatError("truncated name");
  std::string name(in.begin() + static_cast<std::ptrdiff_t>(offset),
                   in.begin() + static_cast<std::ptrdiff_t>(offset + len));
  offset += len;
  return name;
}

} // namespace

std::vector<std::uint8_t> pack_mask_bits(const std::vector<std::uint8_t> &mask) {
  std::vector<std::uint8_t> bytes((mask.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  return bytes;
}

std::vector<std::uint8_t> unpack_mask_bits(const std::vector<std::uint8_t> &bytes,
                                           std::size_t bit_count) {
  if (bytes.size() * 8 < bit_count) throw FormatError("mask bitset too short");
  std::vector<std::uint8_t> mask(bit_count, 0);
  for (std::size_t i = 0; i < bit_count; ++i)
    mask[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  return mask;
}

void append_tensor_block(std::vector<std::uint8_t> &out,
                         const std::vector<NamedTensor> &tensors) {
  append_le(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor &nt : tensors) {
    append_name(out, nt.name);
    out.push_back(static_cast<std::uint8_t>(nt.tensor.shape.size()));
    for (std::size_t dim : nt.tensor.shape)
      append_le(out, static_cast<std::uint32_t>(dim));
    out.push_back(kDtypeF64);
    for (double v : nt.tensor.data) append_f64(out, v);
  }
}

std::vector<NamedTensor> read_tensor_block(const std::vector<std::uint8_t> &in,
                                           std::size_t &offset) {
  const std::uint32_t count = read_le<std::uint32_t>(in, offset);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    nt.name = read_name(in, offset);
    if (offset >= in.size()) throw FormatError("truncated tensor record");
    const std::uint8_t rank = in[offset++];
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = read_le<std::uint32_t>(in, offset);
      nt.tensor.shape.push_back(dim);
      numel *= dim;
    }
    if (offset >= in.size()) throw FormatError("truncated tensor record");
    const std::uint8_t dtype = in[offset++];
    if (dtype != kDtypeF64) throw FormatError("unsupported dtype code");
    nt.tensor.data.resize(numel);
    for (std::size_t i = 0; i < numel; ++i) nt.tensor.data[i] = read_f64(in, offset);
    tensors.push_back(std::move(nt));
  }
  return tensors;
}

void append_mask_block(std::vector<std::uint8_t> &out, const MaskSet &masks) {
  append_le(out, static_cast<std::uint32_t>(masks.layers.size()));
  for (const auto &[id, mask] : masks.layers) {
    append_name(out, "layers." + std::to_string(id) + ".weight");
    append_le(out, static_cast<std::uint64_t>(mask.size()));
    const auto packed = pack_mask_bits(mask);
    out.insert(out.end(), packed.begin(), packed.end());
  }
}

MaskSet read_mask_block(const std::vector<std::uint8_t> &in,
                        std::size_t &offset) {
  const std::uint32_t count = read_le<std::uint32_t>(in, offset);
  MaskSet masks;
  for (std::uint32_t m = 0; m < count; ++m) {
    const std::string name = read_name(in, offset);
    const std::uint64_t bits = read_le<std::uint64_t>(in, offset);
    const std::size_t nbytes = static_cast<std::size_t>((bits + 7) / 8);
    if (offset + nbytes > in.size()) throw FormatError("truncated mask block");
    std::vector<std::uint8_t> packed(in.begin() + static_cast<std::ptrdiff_t>(offset),
                                     in.begin() + static_cast<std::ptrdiff_t>(offset + nbytes));
    offset += nbytes;

    // Names look like "layers.<i>.weight".
    const auto first_dot = name.find('.');
    const auto second_dot = name.find('.', first_dot + 1);
    if (first_dot == std::string::npos || second_dot == std::string::npos)
      throw FormatError("unrecognized mask name: " + name);
    const int layer_id = std::stoi(name.substr(first_dot + 1, second_dot - first_dot - 1));
    masks.layers[layer_id] =
        unpack_mask_bits(packed, static_cast<std::size_t>(bits));
  }
  return masks;
}

std::vector<NamedTensor> model_tensors(const Model &model) {
  std::vector<int> ids(model.layer_count());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  return partition_tensors(model, ids);
}

std::vector<NamedTensor> partition_tensors(const Model &model,
                                           const std::vector<int> &layer_ids) {
  std::vector<NamedTensor> tensors;
  for (int id : layer_ids) {
    const LinearLayer &layer = model.layers()[static_cast<std::size_t>(id)];
    const std::string prefix = "layers." + std::to_string(id) + ".";
    tensors.push_back({prefix + "weight", layer.weight});
    Tensor bias({layer.bias.size()});
    bias.data = layer.bias;
    tensors.push_back({prefix + "bias", std::move(bias)});
  }
  return tensors;
}

Model model_from_tensors(const std::vector<NamedTensor> &tensors,
                         LossKind loss) {
  std::map<int, LinearLayer> layers;
  for (const NamedTensor &nt : tensors) {
    const auto first_dot = nt.name.find('.');
    const auto second_dot = nt.name.find('.', first_dot + 1);
    if (first_dot == std::string::npos || second_dot == std::string::npos)
      throw FormatError("unrecognized tensor name: " + nt.name);
    const int id = std::stoi(nt.name.substr(first_dot + 1, second_dot - first_dot - 1));
    const std::string field = nt.name.substr(second_dot + 1);
    if (field == "weight") {
      if (nt.tensor.shape.size() != 2)
        throw FormatError("weight tensor must be rank 2");
      layers[id].weight = nt.tensor;
    } else if (field == "bias") {
      layers[id].bias = nt.tensor.data;
    } else {
      throw FormatError("unrecognized tensor field: " + field);
    }
  }
  std::vector<LinearLayer> ordered;
  int expect = 0;
  for (auto &[id, layer] : layers) {
    if (id != expect++) throw FormatError("non-contiguous layer ids");
    ordered.push_back(std::move(layer));
  }
  return Model::from_layers(std::move(ordered), loss);
}

void save_checkpoint(const Model &model, const MaskSet &masks,
                     const std::string &path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + sizeof(kMagic));
  append_tensor_block(out, model_tensors(model));
  append_mask_block(out, masks);

  std::ofstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open checkpoint file " + path);
  file.write(reinterpret_cast<const char *>(out.data()),
             static_cast<std::streamsize>(out.size()));
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw FormatError("cannot open checkpoint file " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof(kMagic) ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("bad checkpoint magic");

  std::size_t offset = sizeof(kMagic);
  Checkpoint ckpt;
  ckpt.model = model_from_tensors(read_tensor_block(bytes, offset));
  ckpt.masks = read_mask_block(bytes, offset);
  return ckpt;
}

} // namespace gap
