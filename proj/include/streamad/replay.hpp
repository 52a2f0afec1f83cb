#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "streamad/taskstream.hpp"

namespace streamad {

// Fixed-capacity raw-image memory of past tasks. Stores are kept balanced:
// after N tasks every store holds the quota floor(capacity/N) or ceil.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, std::uint64_t seed);

  // Rebalances existing stores to the new quota (seeded down-sampling without
  // replacement from the stored images, never from the original task) and
  // inserts up to quota samples from task_train.
  void update_after_task(const std::vector<Sample>& task_train, int task_id);

  // Each draw picks a past task uniformly, then a sample uniformly within that
  // task's store; draws are independent.
  std::vector<Sample> sample_batch(int batch_size);

  // current ++ replay batch of equal size (empty buffer: current unchanged),
  // shuffled with the buffer rng.
  std::vector<Sample> mixed_batch(const std::vector<Sample>& current);

  bool empty() const { return stores_.empty(); }
  int capacity() const { return capacity_; }
  std::size_t total_size() const;
  const std::map<int, std::vector<Sample>>& stores() const { return stores_; }

  // Raw bytes held by stored images (8-bit RGB).
  std::size_t memory_bytes() const;

  // Checkpoint: per-task directories of raw images plus a manifest.
  void save(const std::string& dir) const;
  static ReplayBuffer load(const std::string& dir);

 private:
  int capacity_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::map<int, std::vector<Sample>> stores_;
};

}  // namespace streamad
