#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace salfuse {

// Versioned binary container for named parameter arrays. Byte layout (all
// integers little-endian, documented in docs/formats.md):
//   magic "SFCK" | u32 version | u64 config_hash | u32 entry count
//   per entry: u32 name length | name bytes | u32 ndim(=4) | 4x u32 extents
//              | f64 values (row-major)
struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

struct Checkpoint {
    std::uint32_t version = 1;
    std::uint64_t config_hash = 0;
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry* find(const std::string& name) const;
};

Checkpoint snapshot_parameters(const ParameterStore& store, std::uint64_t config_hash);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Strict application: the checkpoint must cover the store exactly; any
// missing, extra or reshaped entry produces a config error listing the diff.
void apply_checkpoint(const Checkpoint& ckpt, ParameterStore& store);

// Copies entries whose name starts with `from_prefix` onto parameters named
// with `to_prefix` instead; returns how many were applied. Missing targets
// are a config error.
std::size_t apply_checkpoint_mapped(const Checkpoint& ckpt, ParameterStore& store,
                                    const std::string& from_prefix,
                                    const std::string& to_prefix);

// FNV-1a over a file's raw bytes; io error when unreadable.
std::uint64_t hash_file(const std::string& path);

}  // namespace salfuse
