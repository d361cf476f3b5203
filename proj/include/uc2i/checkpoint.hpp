#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uc2i/backbone.hpp"
#include "uc2i/intents.hpp"

namespace uc2i {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::size_t layers = 0;
  std::size_t user_clusters = 0;
  std::size_t item_clusters = 0;
  EmbeddingTable embeddings;
  Matrix user_targets;  // 0 rows when targets were not generated
  Matrix item_targets;
  std::uint64_t best_epoch = 0;
  double best_val_recall = 0.0;
  std::uint64_t seed = 0;
};

// Layout, all little-endian:
//   "UC2I" | u32 version | u64 users, items, dim, layers, C, C' | u64 seed |
//   u64 best_epoch | f64 best_val_recall | u64 user target rows |
//   u64 item target rows | f64 embeddings (row-major) | f64 user targets |
//   f64 item targets | u32 CRC32 of everything before it
std::vector<unsigned char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace uc2i
