#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "streamad/features.hpp"
#include "streamad/image.hpp"

namespace streamad {

// Farthest-point (k-center) greedy selection. Starts from a seeded random
// point, then iteratively adds the point maximizing the distance to the
// nearest already-selected point. When proj_dim > 0 a seeded sparse random
// projection is used for the distance computations only; returned indices
// always refer to the original vectors. m >= rows: all indices in original
// order.
std::vector<int> greedy_coreset(const Eigen::MatrixXf& patches, int m,
                                std::uint64_t seed, int proj_dim = 0);

// Capacity-bounded patch memory partitioned per task. Every update recomputes
// the quota m = floor(capacity / n_tasks), re-reduces each old store from its
// current contents (dropped patches are never resurrected) and inserts the
// reduced new task.
class CoresetBank {
 public:
  CoresetBank(int capacity, int neighbor_k = 1, std::uint64_t seed = 0,
              int proj_dim = 0);

  void update_after_task(const Eigen::MatrixXf& task_patches, int task_id);

  // Distance to the nearest stored patch per grid cell, upsampled and
  // smoothed. Image score = map max.
  FloatMap score(const PatchEmbedding& embedding, int out_h, int out_w,
                 double smoothing_sigma) const;

  // Exact nearest-neighbor distance of a single query vector.
  float nearest_distance(const Eigen::VectorXf& query) const;

  int capacity() const { return capacity_; }
  int n_tasks() const { return static_cast<int>(stores_.size()); }
  std::size_t total_patches() const;
  const std::map<int, Eigen::MatrixXf>& stores() const { return stores_; }

  std::size_t memory_bytes() const;  // stored floats at 4 bytes each

  // Checkpoint: manifest + per-task float arrays in the flat embedding format.
  void save(const std::string& dir) const;
  static CoresetBank load(const std::string& dir);

 private:
  int capacity_;
  int neighbor_k_;
  std::uint64_t seed_;
  int proj_dim_;
  int d_ = 0;
  std::map<int, Eigen::MatrixXf> stores_;
};

}  // namespace streamad
