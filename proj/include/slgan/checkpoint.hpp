#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "slgan/trainer.hpp"

namespace slgan {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointMagic = "SLGAN-CHECKPOINT";

// Layout:
//   SLGAN-CHECKPOINT\n
//   <metadata bytes> <metadata sha256>\n
//   <metadata JSON>\n
//   <float32 little-endian blobs, manifest order>
// The metadata holds format_version, config, attribute_names, iteration, rng state, optimizer
// step counters and a manifest {name, shape, offset, bytes, sha256} for every tensor.
std::string serialize_checkpoint(const TrainState& state);
TrainState deserialize_checkpoint(const std::string& bytes);

// Writes through a temporary file and renames, so an existing checkpoint is never half-written.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
// IntegrityError on truncation, bad magic or checksum mismatch; VersionError on another version.
TrainState load_checkpoint(const std::filesystem::path& path);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Generic container shared by checkpoints and probe files: a magic line, a
// "<metadata bytes> <metadata sha256>" line, the metadata JSON with a "tensors" manifest
// added, then the blobs. unpack_archive verifies every checksum and extent.
std::string pack_archive(std::string_view magic, nlohmann::json meta,
                         const std::vector<std::pair<std::string, const Tensor*>>& tensors);
struct Archive {
  nlohmann::json meta;
  std::vector<NamedTensor> tensors;
};
Archive unpack_archive(std::string_view magic, const std::string& bytes);

std::string checkpoint_file_name(std::int64_t iteration);

}  // namespace slgan
