#pragma once

#include <map>

#include "vseg/nn.hpp"

namespace vseg {

// Checkpoint container: 8-byte magic "VSEGCKP1", u32 version, u32 config
// length + config echo, u32 tensor count, then per tensor: u16 name length,
// name, u8 dtype (0 = f32), u8 rank, u32 extents, u64 payload bytes,
// little-endian payload.
void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config_echo);

struct LoadedCheckpoint {
    std::string config_echo;
    std::map<std::string, std::pair<Shape, std::vector<float>>> tensors;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// Copies tensors into the store; any missing name or shape mismatch is a
// checkpoint/config incompatibility.
void restore_params(ParamStore<float>& params, const LoadedCheckpoint& ckpt);

}  // namespace vseg
