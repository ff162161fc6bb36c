#pragma once

// Binary checkpoint files.
//
// Layout: "RICC" 0x01 | u32 LE version | u32 LE header length | UTF-8 JSON
// header {"arch": <descriptor>, "tensors": [{name, shape, offset, learnable}]}
// | raw little-endian float32 data (offsets relative to the data start).

#include <filesystem>
#include <optional>
#include <stdexcept>

#include "ricc/models.hpp"

namespace ricc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class MagicMismatch : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class VersionMismatch : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class Truncated : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};
class ArchMismatch : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

void save_checkpoint(const Model& model, const std::filesystem::path& path);

// Throws ArchMismatch when `expected` is given and differs from the stored
// architecture, or when the manifest does not match the stored descriptor.
Model load_checkpoint(const std::filesystem::path& path, std::optional<ArchId> expected = std::nullopt);

}  // namespace ricc
