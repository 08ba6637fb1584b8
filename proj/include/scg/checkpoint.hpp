#pragma once
// Binary checkpoint, little-endian throughout:
//
//   magic      8 bytes  "SCGCKPT\0"
//   version    u32      1
//   config     u64 length + UTF-8 JSON (dump_config output)
//   entries    u32 count, then per entry:
//                u8 kind (0 parameter, 1 buffer)
//                u32 name length + name bytes
//                u32 rank + rank × u64 dims
//   data       f32 values of every entry, in manifest order
//
// See docs/checkpoint.md.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scg/model.hpp"

namespace scg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
    std::string name;
    bool buffer = false;
    Shape shape;
    std::vector<float> values;
};

struct Checkpoint {
    std::string config_json;
    std::vector<CheckpointEntry> entries;
};

template <typename T>
Checkpoint make_checkpoint(const ParameterRegistry<T>& registry, const std::string& config_json);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(const std::string& bytes);

/// Copies entries into the registry's tensors. Every parameter and buffer
/// must appear with the same name and shape; DataError otherwise.
template <typename T>
void load_into(ParameterRegistry<T>& registry, const Checkpoint& ckpt);

template <typename T>
void save_model(const std::filesystem::path& path, const ScgNet<T>& model, const RunConfig& config);

/// Rebuilds the model from the embedded config and restores its weights.
template <typename T>
ScgNet<T> load_model(const std::filesystem::path& path, RunConfig* config = nullptr);

} // namespace scg
