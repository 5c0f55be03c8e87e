#pragma once

#include <map>
#include <string>

#include "json.hpp"

#include "cloudtomo/nn/layers.hpp"

namespace cloudtomo::io {

struct Checkpoint {
  nlohmann::json meta;  // step, seed, arch, ...
  std::map<std::string, nn::Tensor> tensors;
};

// "CTCK" magic, u32 LE header length, JSON header listing tensor names,
// shapes and offsets, then concatenated little-endian float32 blobs.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

Checkpoint checkpoint_from_store(const nn::ParamStore& store, nlohmann::json meta);
// Shape-checked; every parameter in the store must be present.
void load_into_store(const Checkpoint& ckpt, nn::ParamStore& store);

}  // namespace cloudtomo::io
