#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "audiomt/model.hpp"
#include "audiomt/optimizer.hpp"

namespace audiomt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;
};

// Little-endian: magic "AUDIOMT\0", u32 version, model config, u64 tensor
// count, then per tensor: u32 name length, name bytes, u32 rank, u64 dims,
// f64 values (row-major).
void write_checkpoint_file(const std::filesystem::path& path, const ModelConfig& config,
                           const std::vector<NamedTensor>& tensors);

struct CheckpointFile {
  ModelConfig config;
  std::vector<NamedTensor> tensors;
};

// Throws CheckpointNotFound or MalformedCheckpoint.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

template <typename S>
struct Checkpoint {
  Parameters<S> params;
  std::optional<OptimizerState<S>> optimizer;
};

// Optimizer moments are stored as "opt.m.<name>" and "opt.v.<name>", the step
// count as the 1x1 tensor "opt.step".
template <typename S>
void save_checkpoint(const std::filesystem::path& path, const Parameters<S>& params,
                     const OptimizerState<S>* optimizer = nullptr);

template <typename S>
Checkpoint<S> load_checkpoint(const std::filesystem::path& path, AdamWConfig hp = {});

}  // namespace audiomt
