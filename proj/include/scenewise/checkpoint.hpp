#pragma once

#include <filesystem>

#include "scenewise/params.hpp"

namespace scenewise {

// Checkpoint container (binary, little-endian):
//   magic "ASC1", format version u32, precision tag u8, tensor count u32;
//   per tensor: name length u16 + UTF-8 name, dtype u8, rank u8,
//   dims u32 x rank, raw payload.
// Tensor names are "layer<index>.<name>". fp16 checkpoints store every
// tensor as binary16; loading widens back to fp32 values exactly.

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace scenewise
