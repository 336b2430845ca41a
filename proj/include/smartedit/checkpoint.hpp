#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smartedit/tensor.hpp"

namespace smartedit {

/// Flat tensor container. Layout: 8-byte magic "SMEDTNSR", then per entry
/// u64 name length, name bytes, u64 rank, u64 dims, f64 payload — all
/// little-endian. Round-trips bit-exactly.
inline constexpr char kCheckpointMagic[9] = "SMEDTNSR";

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

/// Copies checkpoint values into matching live parameters (by name).
/// Throws ConfigError on missing names or shape mismatches.
void load_checkpoint_into(const std::string& path,
                          std::vector<std::pair<std::string, Tensor>>& params);

/// Write-temp-then-rename helper shared by everything that emits files.
void atomic_write_file(const std::string& path, const std::string& contents);

}  // namespace smartedit
