#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mainet/tensor.hpp"

namespace mainet::train {

struct CheckpointMeta {
  std::size_t epoch = 0;  // epochs completed
  double lr = 0.0;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
  double sched_best = -1e300;
  std::size_t sched_since = 0;
  std::size_t adam_steps = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

/// Checkpoint layout: checkpoint.bin holds the named tensors back to back in
/// the tensor wire format; checkpoint.json maps name -> byte offset and shape
/// and carries the training meta block.
void save_checkpoint(const std::string& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const CheckpointMeta& meta);

/// Restores values into the given tensors by name (shapes must match) and
/// returns the meta block. Missing names are an error; extra stored tensors
/// stay available through load_checkpoint_tensor.
CheckpointMeta load_checkpoint(const std::string& dir,
                               const std::vector<std::pair<std::string, Tensor>>& tensors);

bool checkpoint_exists(const std::string& dir);

/// Reads one stored tensor by name (used for optimizer state blocks).
Tensor load_checkpoint_tensor(const std::string& dir, const std::string& name);
std::vector<std::string> checkpoint_tensor_names(const std::string& dir);

}  // namespace mainet::train
