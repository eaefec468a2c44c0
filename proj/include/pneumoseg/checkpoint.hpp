#pragma once

#include <string>
#include <vector>

#include "pneumoseg/model.hpp"

namespace pneumoseg {

// Binary snapshot of named float tensors:
//   "NTS1" | u32 count | per tensor: u16 name_len, name bytes, u8 dtype (0 =
//   float32), u8 rank, rank * u32 extents, row-major float32 payload.
// All integers little-endian. The write is atomic (temp file + rename).
void save_checkpoint(const std::string& path, const std::vector<NamedTensor<float>>& tensors);

// Loads every record; is_buffer is not stored, so it is left false.
std::vector<NamedTensor<float>> load_checkpoint(const std::string& path);

// Copies values into the model's tensors in place (existing storage keeps
// its identity, so optimizer state stays attached). The file must contain
// exactly the model's tensor names with matching shapes.
void load_checkpoint_into(const std::string& path, ResNet34UNet<float>& model);

}  // namespace pneumoseg
